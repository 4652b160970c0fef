#!/usr/bin/env python3
"""Energy error of the infinite-chain engine versus bond dimension at the
non-interacting half-filled point, where the exact energy per site is
-4/pi.  The gapless point is the engine's hardest case: the error decays
as a power of chi set by finite-entanglement scaling, so no schedule
depth rescues a too-small chi.  Useful for picking chi for production
runs near gapless phases.

Usage: bond_dimension_scan.py [chi ...]    (default scan 16..64)
"""

import math
import sys
import time

from ghm1d.itebd import default_schedule, ground_state_itebd
from ghm1d.model import ModelParams
from ghm1d.observables import correlation_set

EXACT = -4.0 / math.pi


def run(chi):
    params = ModelParams.from_mu(t=1.0, delta_g=0.0, delta_t=0.0,
                                 U=0.0, mu=0.0, delta_mu=0.0)
    start = time.perf_counter()
    state, report = ground_state_itebd(params, schedule=default_schedule(),
                                       chi_max=chi)
    wall = time.perf_counter() - start
    cset = correlation_set(state, m=4)
    return (report.final_energy_per_site, cset.filling,
            report.total_steps, wall)


if __name__ == "__main__":
    scan = [int(a) for a in sys.argv[1:]] or [16, 24, 32, 40, 48, 56, 64]
    print(f"exact energy per site {EXACT:.10f}")
    print("chi   energy/site      error      n        steps   wall[s]")
    for chi in scan:
        energy, filling, steps, wall = run(chi)
        print(f"{chi:<4d}  {energy:.10f}  {energy - EXACT:.3e}  "
              f"{filling:.6f}  {steps:<6d}  {wall:7.1f}")
