"""Staeckelkit: build, quantize and verify Stäckel integrable systems."""

__version__ = "0.1.0"
