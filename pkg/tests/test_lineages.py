import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdp_lab import lineages as lin
from gdp_lab.rng import RngStream

# independent mpmath summation of the series (rising factorials, 40 digits), frozen
ORACLE_T1 = [0.036054756335124905614, 0.31979142547022831732, 0.45123491142511093104,
             0.17108058683254510562, 0.020930960049896544465]
ORACLE_T2 = {0: 3.4777794118592389805e-07, 3: 0.0054802366928177299314, 6: 0.18115698004430147260}


def test_c_factor_values():
    assert lin.c_factor(2.0, 1.0) == pytest.approx((math.e - 1) / 2, rel=1e-15)
    assert lin.c_factor(-2.0, 1.0) == pytest.approx((1 - math.exp(-1)) / 2, rel=1e-15)
    assert lin.c_factor(0.0, 3.0) == 1.5
    assert lin.c_limit(-2.0) == 0.5 and math.isinf(lin.c_limit(1.0))


@settings(max_examples=80, deadline=None)
@given(st.floats(-3, 3), st.floats(1e-3, 10))
def test_c_inverse_round_trip(lam, t):
    assert lin.c_inverse(lam, lin.c_factor(lam, t)) == pytest.approx(t, rel=1e-9)


def test_tavare_oracles():
    assert [lin.tavare_pmf(1.0, 1.0, n) for n in range(5)] == pytest.approx(ORACLE_T1, rel=1e-12)
    for n, v in ORACLE_T2.items():
        assert lin.tavare_pmf(2.0, 0.25, n) == pytest.approx(v, rel=1e-10)


@pytest.mark.parametrize("theta,t", [(0.5, 0.25), (5.0, 2.0), (1.0, 0.05)])
def test_tavare_normalized(theta, t):
    pmf = lin.tavare_distribution(theta, t)
    assert pmf.method == "series"
    assert abs(pmf.probs.sum() - 1) < 1e-8 and np.all(pmf.probs >= -1e-15)


def test_kingman_reproducible_and_bounded():
    a = lin.simulate_kingman(2.0, 0.5, rng=RngStream(1), size=1000)
    b = lin.simulate_kingman(2.0, 0.5, rng=RngStream(1), size=1000)
    assert np.array_equal(a, b) and a.min() >= 0


def test_death_path_structure_and_refine():
    gen = RngStream(7).generator()
    path = lin.simulate_death_path(1.0, 1.0, 1e-3, 20.0, gen)
    assert np.all(np.diff(np.r_[path.n0, path.counts]) == -1)
    fine = lin.refine(path, 5e-4, gen)
    assert fine.n0 >= path.n0
    s = np.linspace(1e-3, 5.0, 50)
    assert np.array_equal(fine.count_at(s), path.count_at(s))


def test_time_change_monotone_and_bound():
    gen = RngStream(3).generator()
    path = lin.simulate_death_path(1.0, 1.0, lin.default_t0(1.0, 1.0), 50.0, gen)
    taus = [lin.time_change_tau(path, 2.0, t).tau for t in (0.1, 0.3, 0.5, 1.0)]
    assert np.all(np.diff(taus) > 0)
    tc = lin.time_change_tau(path, 2.0, 0.5)
    tc2 = lin.time_change_tau(lin.refine(path, path.t0 / 2, gen), 2.0, 0.5)
    assert abs(tc.tau - tc2.tau) <= tc.bound


def test_clock_exhaustion_for_negative_lambda():
    gen = RngStream(0).generator()
    _, ex = lin.time_changed_counts(4.0, -1.0, 2.0, 0.5, 2000, gen)
    assert ex.mean() > 0.3


def test_death_marginal_is_poisson():
    from scipy import stats
    assert lin.death_marginal_pmf(2.0, 1.0, 0.5, 3) == pytest.approx(stats.poisson.pmf(3, 2.0 / lin.c_factor(1.0, 0.5)))
    with pytest.raises(lin.ParameterError):
        lin.death_marginal_pmf(-1.0, 1.0, 0.5, 0)


def test_death_counts_mean():
    x = lin.death_counts_at(3.0, 0.5, 1.0, 100_000, RngStream(11))
    m = 3.0 / lin.c_factor(0.5, 1.0)
    assert abs(x.mean() - m) < 4 * math.sqrt(m / x.size)
