#!/usr/bin/env python3
"""
evdom - command-line entry point.

Examples:
    python evdom.py spectrum --op antisymmetric --n 400 --k 6
    python evdom.py check dominate --a dirichlet --b nonlocal-symmetric --mode uniform --t-grid log:0.01:50:200
    python evdom.py scenario rank-one --n-grid 128 --format json
"""
import sys

from cli_reporting import run


def main() -> int:
    """Main entry point."""
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
