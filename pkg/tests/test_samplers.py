import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from gdp_lab import samplers as smp
from gdp_lab.measures import BaseSpace
from gdp_lab.rng import RngStream

UNIT = BaseSpace.unit_interval()


def test_sticks_and_tail_sum_to_one():
    b = smp.sample_pd(1.5, rng=RngStream(3), size=200)
    assert np.allclose(b.weights.sum(1) + b.tail, 1.0, atol=1e-14)
    assert np.all(b.tail <= 1e-8)
    assert np.all(np.diff(b.weights, axis=1) <= 0)


def test_fixed_truncation_two_param():
    b = smp.sample_pd(1.0, 0.5, smp.TruncationPolicy.fixed(50), RngStream(1), size=10)
    assert b.weights.shape == (10, 50)
    assert np.allclose(b.weights.sum(1) + b.tail, 1.0)


def test_same_seed_same_draws():
    a = smp.sample_gamma_measure(2.0, UNIT, rng=RngStream(9, 2), size=50)
    b = smp.sample_gamma_measure(2.0, UNIT, rng=RngStream(9, 2), size=50)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.locations, b.locations)


def test_parameter_errors():
    with pytest.raises(smp.ParameterError):
        smp.sample_pd(0.0, rng=1)
    with pytest.raises(smp.ParameterError):
        smp.sample_pd(1.0, alpha=1.0, rng=1)
    with pytest.raises(smp.ParameterError):
        smp.TruncationPolicy.tail(0.0)
    with pytest.raises(smp.ParameterError):
        smp.sample_gamma_jumps_inverse_levy(-1.0, 3, 1)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 30.0))
def test_solve_e1_inverts(y):
    x = smp.solve_e1(np.array([y]))
    assert special.exp1(x[0]) == pytest.approx(y, rel=1e-9)


def test_inverse_levy_jumps_descend():
    x, tail = smp.sample_gamma_jumps_inverse_levy(1.0, 30, RngStream(4), size=100)
    assert np.all(np.diff(x, axis=1) < 0)
    assert np.all(tail > 0)


def test_stable_jumps_formula():
    rho, tail = smp.sample_stable_jumps(0.5, 2.0, 5, RngStream(2), size=3)
    assert np.all(np.diff(rho, axis=1) < 0) and rho.shape == (3, 5)


def test_finite_stationary_moments():
    from gdp_lab.measures import AtomicMeasure, TestFunction
    sp = BaseSpace.finite([0.5, 0.5])
    a, b = TestFunction.on_points([1.0, 0.5]), TestFunction.on_points([2.0, 1.0])
    mu0 = AtomicMeasure.from_dense(np.array([1.0, 3.0]), sp)
    X = smp.sample_finite_gamma_stationary(a, b, mu0, RngStream(0), size=200_000).weights
    # shape mu0/a, scale a/b -> mean mu0/b
    assert np.allclose(X.mean(0), [0.5, 3.0], rtol=0.02)


def test_gem_first_stick_mean():
    V = smp.sample_gem(2.0, 1, RngStream(5), size=100_000).sticks[:, 0]
    assert abs(V.mean() - 1 / 3) < 4 * V.std() / np.sqrt(V.size)
