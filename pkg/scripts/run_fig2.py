#!/usr/bin/env python3
"""Attractive-chain chemical potential sweeps (three field strengths),
the trap-profile readout of the shell structure."""

import sys

from ghm1d.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", *sys.argv[1:], "fig2"]))
