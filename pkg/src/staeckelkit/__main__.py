"""Entry point for staeckelkit."""

from __future__ import annotations

import logging
import sys
from collections.abc import Sequence


def main(argv: Sequence[str] | None = None) -> int:
    from staeckelkit.cli import build_parser, log_level, run

    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=log_level(args),
        format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
    )
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
