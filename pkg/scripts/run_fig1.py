#!/usr/bin/env python3
"""Tuned partially polarized chains: correlations and spectra for the
six (U, delta_g) combinations, each brought to n = 1, p = 0.4."""

import sys

from ghm1d.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", *sys.argv[1:], "fig1"]))
