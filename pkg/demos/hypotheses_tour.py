"""Certify the structural hypotheses of each builtin system, then break one.

Run: python3 demos/hypotheses_tour.py
"""
from relaxbl import hypotheses as hy
from relaxbl.systems import build_system

for name in ("linear_reaction", "elasticity", "combustion"):
    s = build_system(name)
    A = hy.suggest_A(s)
    summary = hy.check_all(s, A, n_samples=4000)
    print(f"\n{name}: A = {A.A[0, 0]:g} I, strict pass = {summary.passed}")
    for r in summary.reports.values():
        print(f"  {r.hypothesis_id:8s} {r.verdict.value:15s} margin {r.margin + 0.0: .4g}")

# An undersized relaxation matrix violates the subcharacteristic condition.
# The report carries a witness state, and re-evaluating there reproduces the margin.
s = build_system("elasticity")
A = hy.RelaxationMatrix.scaled_identity(s.n, 0.1)
bad = hy.check_subcharacteristic(s, A)
print(f"\nelasticity with A = 0.1 I: {bad.verdict.value}, margin {bad.margin:.4f}, "
      f"recomputed at witness {hy.reevaluate(bad, s, A):.4f}")
