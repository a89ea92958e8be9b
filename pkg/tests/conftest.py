"""Shared test fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from staeckelkit.exprs import Domain
from staeckelkit.gallery import GalleryCase, identity_case, power_law, vandermonde


@pytest.fixture
def identity2() -> GalleryCase:
    return identity_case(2)


@pytest.fixture
def identity3() -> GalleryCase:
    return identity_case(3)


@pytest.fixture
def vandermonde2() -> GalleryCase:
    return vandermonde(2)


@pytest.fixture
def vandermonde3() -> GalleryCase:
    return vandermonde(3)


@pytest.fixture
def power_law3() -> GalleryCase:
    return power_law(3)


@pytest.fixture
def unit_square() -> Domain:
    return Domain.box(2, 0.0, 1.0)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test-side random points."""
    return np.random.default_rng(1234)
