"""Watch sup_t Psi shrink like eps^2 for well-prepared smooth data.

A coarser grid than the acceptance runs keeps this under a minute; the
slope is still close to 2. Run: python3 demos/eps_convergence.py
"""
from relaxbl import harness as hn

cfg = hn.deep_merge(hn.BUILTIN_SCENARIOS["elasticity"], {"grid": {"n_cells": 512}, "solver": {"t_end": 0.25}})
sc = hn.Scenario.from_config(cfg)
gate = hn.rate_assertion(sc)
print(f"rate class {gate['kind']} (decided by {gate['gated_by']}), expected slope in {gate['bounds']}")

table = hn.eps_sweep(sc, [4e-3, 2e-3, 1e-3], floor_check=False)
for eps, err in table.rows:
    print(f"  eps {eps:.1e}   sup Psi {err:.3e}")
print(f"fitted slope {table.slope:.3f}, r2 {table.r2:.4f}, flags {table.flags or 'none'}")

st = hn.stability_from_runs(table.details)
print(f"sup phi / phi(0) per eps: {[round(r, 4) for r in st.phi_ratio]}")
