"""Two candidate closed forms for the time-t Laplace functional of a branching
diffusion with immigration, adjudicated by an Euler-Maruyama simulation.

    python3 demos/laplace_variants.py
"""
import numpy as np

from gdp_lab import densities as dens
from gdp_lab import dynamics as dyn
from gdp_lab.measures import AtomicMeasure, BaseSpace, TestFunction
from gdp_lab.rng import RngStream

sp = BaseSpace.finite([0.4, 0.6])
a, b, mu0 = [0.5, 1.0], [1.0, 2.0], [0.6, 0.8]
start, f, t = [1.0, 0.5], [0.7, 1.3], 0.5
fn = TestFunction.on_points
args = (fn(a), fn(b), AtomicMeasure.from_dense(np.array(mu0), sp), AtomicMeasure.from_dense(np.array(start), sp), t, fn(f))
for variant in ("corrected", "literal"):
    print(f"{variant:9s} {dens.laplace_mbi_time_t(*args, variant):.6f}")

params = dyn.GeneratorParams.general(a, b, mu0, sp)
for h in (2e-3, 1e-3):
    X = dyn.sde_oracle(params, start, t, h, RngStream(3).generator(), 50_000)
    v = np.exp(-X @ np.array(f))
    print(f"SDE h={h:g}: {v.mean():.6f} +/- {v.std() / np.sqrt(v.size):.6f}")
