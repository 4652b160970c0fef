#!/usr/bin/env python3
"""Correlated-hopping chain sweeps: repulsive on-site interaction with
doublon-assisted tunneling, swept across the trap profile."""

import sys

from ghm1d.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", *sys.argv[1:], "fig3"]))
