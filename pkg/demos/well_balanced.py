"""A steady exponential profile of u_x = -lam u stays put.

The periodic domain forces a jump at the seam, which relaxes quickly and
sends waves inward; away from it the drift is O(dx^2).
Run: python3 demos/well_balanced.py
"""
import numpy as np

from relaxbl import harness as hn
from relaxbl import solver as sv

for n in (128, 256, 512):
    cfg = hn.deep_merge(hn.BUILTIN_SCENARIOS["steady_linear"], {"grid": {"n_cells": n}})
    sc = hn.Scenario.from_config(cfg)
    scfg = sc.solver_config()
    tr = sv.run(sc.system, sc.grid, sc.initial_profile(), scfg)
    drift = np.abs(tr.final.u - tr.snapshots[0].u)[:, 0]
    x = sc.grid.centers
    inner = (x >= 0.25) & (x <= 0.75)
    dx2 = sc.grid.dx ** 2
    print(f"N={n:5d}  interior drift/T/dx^2 = {drift[inner].max() / scfg.t_end / dx2:6.3f}"
          f"   whole-domain drift/T = {drift.max() / scfg.t_end:.3e}")
