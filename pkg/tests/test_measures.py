import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdp_lab.measures import (AtomicMeasure, BaseSpace, ContractError, DomainError, MeasureBatch, TestFunction,
                              normalize, scale_by_function, to_ordered_masses, to_partition)

S3 = BaseSpace.finite([0.2, 0.3, 0.5])


def test_base_space_validation():
    with pytest.raises(ValueError):
        BaseSpace.finite([0.5, 0.6])
    with pytest.raises(ValueError):
        BaseSpace.finite([-0.1, 1.1])
    with pytest.raises(ContractError):
        BaseSpace.unit_interval().size


def test_expect_exact_on_steps():
    g = TestFunction.step([0.0, 0.3, 1.0], [2.0, -1.0])
    assert BaseSpace.unit_interval().expect(g) == pytest.approx(0.3 * 2 - 0.7, abs=1e-14)
    assert S3.expect(TestFunction.on_points([1.0, 2.0, 3.0])) == pytest.approx(2.3)


def test_test_function_bounds_enforced():
    g = TestFunction(lambda x: 2.0 * np.ones_like(x, float), 0.0, 1.0)
    with pytest.raises(DomainError):
        g(np.arange(3))


def test_normalize_and_partition():
    mu = AtomicMeasure(np.array([1.0, 3.0]), np.array([0, 2]), S3)
    assert normalize(mu).total_mass == pytest.approx(1.0)
    p = to_partition(mu)
    assert np.allclose(p.weights, [0.75, 0.25])
    with pytest.raises(DomainError):
        normalize(AtomicMeasure(np.zeros(1), np.array([0]), S3))
    assert np.allclose(to_ordered_masses(mu).jumps, [3.0, 1.0])


def test_identity_scaling_is_exact():
    W = np.random.default_rng(0).random((5, 4))
    m = MeasureBatch(W, np.zeros((5, 4), int), S3)
    assert np.array_equal(scale_by_function(m, TestFunction.constant(1.0)).weights, W)
    assert np.array_equal(scale_by_function(m, TestFunction.constant(0.0), "exponential").weights, W)
    P = MeasureBatch(W / W.sum(1, keepdims=True), np.zeros((5, 4), int), S3)
    assert scale_by_function(P, TestFunction.constant(3.0), "normalized") is P


def test_multiplicative_needs_positive_f():
    mu = AtomicMeasure(np.array([1.0]), np.array([0]), S3)
    with pytest.raises(ContractError):
        scale_by_function(mu, TestFunction.on_points([0.0, 1.0, 1.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=3, max_size=3), st.lists(st.floats(0.01, 3.0), min_size=3, max_size=3))
def test_scaling_round_trip(fvals, w):
    mu = AtomicMeasure.from_dense(np.array(w), S3)
    f = TestFunction.on_points(fvals)
    back = scale_by_function(scale_by_function(mu, f), f.reciprocal())
    assert np.allclose(back.dense(), mu.dense(), rtol=1e-12)
    nm = scale_by_function(mu, f, "normalized")
    assert nm.total_mass == pytest.approx(1.0)
