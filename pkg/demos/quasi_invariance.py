"""Change of measure for the gamma random measure under multiplication by a
positive step function: E[F(T_f X)] against E[F(X) dP_f/dP(X)].

    python3 demos/quasi_invariance.py
"""
from gdp_lab.suites import SUITES

for name in ("quasi-invariance-gamma", "quasi-invariance-dirichlet", "quasi-invariance-pd"):
    for r in SUITES[name].run(seed=0, replicates=50_000):
        z = "" if r.z is None else f"z={r.z:+.2f}"
        print(f"{r.id:48s} {r.left:.5f} {r.right:.5f} {z:9s} {r.decision}")
