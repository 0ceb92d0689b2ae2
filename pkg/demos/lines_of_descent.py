"""Lines of descent: the alternating-series pmf next to a simulated Kingman chain,
and the time-changed death chain on the (a, lambda) grid.

For lambda < 0 the printout shows how many paths run out of clock before t.

    python3 demos/lines_of_descent.py
"""
import numpy as np

from gdp_lab import lineages as lin
from gdp_lab.rng import RngStream

theta, t, n = 2.0, 0.5, 100_000
pmf = lin.tavare_distribution(theta, t)
p = np.asarray(pmf.probs)
k = lin.simulate_kingman(theta, t, rng=RngStream(0).generator(), size=n)
emp = np.bincount(k, minlength=p.size)[: p.size] / n
print(f"theta={theta} t={t}: mean lines {np.dot(np.arange(p.size), p):.4f}, TV vs Kingman {0.5 * np.abs(emp - p).sum():.4f}")

for i, a in enumerate((0.5, 1.0, 4.0)):
    for j, lam in enumerate((-1.0, 0.0, 1.0)):
        counts, exhausted = lin.time_changed_counts(a, lam, theta, t, 20_000, RngStream(1, 0, (i, j)).generator())
        q = np.bincount(counts, minlength=p.size)[: p.size] / counts.size
        print(f"a={a:<4g} lambda={lam:<3g} TV={0.5 * np.abs(q - p).sum():.4f} exhausted={int(np.sum(exhausted))}")
