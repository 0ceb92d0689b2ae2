import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdp_lab import dynamics as dyn
from gdp_lab import lineages as lin
from gdp_lab.measures import BaseSpace, DomainError
from gdp_lab.rng import RngStream

S3 = BaseSpace.finite([0.2, 0.3, 0.5])
G1, G2, G3 = np.array([1.0, 0.5, 0.2]), np.array([0.3, 1.2, 0.7]), np.array([0.9, 0.1, 0.4])
pos = st.lists(st.floats(0.05, 3.0), min_size=3, max_size=3).map(np.array)


def test_generator_on_linear_function():
    # L <mu, g> = <mu0 - b mu, g> for a linear cylinder function
    x = np.array([0.4, 1.0, 0.2])
    F = dyn.CylinderFunction.linear(G1)
    p = dyn.GeneratorParams.mbi(2.0, 1.0, S3)
    assert dyn.apply_generator(p, F, x) == pytest.approx((2.0 * S3.probs / 2 - 0.5 * x) @ G1)
    q = dyn.GeneratorParams.fvp(2.0, S3)
    nu = x / x.sum()
    assert dyn.apply_generator(q, F, nu) == pytest.approx((S3.probs - nu) @ G1)


def test_fvp_requires_probability():
    with pytest.raises(DomainError):
        dyn.apply_generator(dyn.GeneratorParams.fvp(1.0, S3), dyn.CylinderFunction.linear(G1), np.ones(3))


@settings(max_examples=40, deadline=None)
@given(pos, st.floats(0.2, 4.0), st.floats(-2.0, 2.0))
def test_projection_identity(x, theta, lam):
    Phi = dyn.CylinderFunction.exponential(G1) * dyn.CylinderFunction.monomial([G2], [2])
    res = dyn.check_projection_identity(theta, lam, Phi, x, nu0=S3)
    assert res.relative < 1e-10
    r = x.sum()
    off = dyn.check_projection_identity(theta, lam, Phi, x, constant=2.0, nu0=S3)
    assert off.lhs - off.rhs == pytest.approx(-3 * r * r * float(Phi(x / r)), rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(pos, st.sampled_from(["MBI", "General"]))
def test_product_rule(x, variant):
    p = dyn.GeneratorParams.mbi(1.5, 0.7, S3) if variant == "MBI" else \
        dyn.GeneratorParams.general([0.5, 1.0, 2.0], [1.0, 0.3, 0.8], [0.2, 0.4, 0.1], S3)
    F, G = dyn.CylinderFunction.exponential(G1), dyn.CylinderFunction.monomial([G2, G3], [1, 2])
    lhs = dyn.apply_generator(p, F * G, x)
    rhs = F(x) * dyn.apply_generator(p, G, x) + G(x) * dyn.apply_generator(p, F, x) + \
        2 * dyn.carre_du_champ(p, F, G, x)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_carre_du_champ_definition():
    p = dyn.GeneratorParams.general([0.5, 1.0, 2.0], [1.0, 0.3, 0.8], [0.2, 0.4, 0.1], S3)
    F = dyn.CylinderFunction.linear(G1)
    x = np.array([0.3, 0.6, 0.9])
    assert dyn.carre_du_champ(p, F, F, x) == pytest.approx(np.sum(x * np.array([0.5, 1.0, 2.0]) * G1 ** 2))


def test_partials_agree_with_differences():
    H = (dyn.CylinderFunction.exponential(G1) * dyn.CylinderFunction.monomial([G2, G3], [2, 1])).homogeneous_lift(3)
    assert H.partials_error(np.array([1.3, 0.4, 0.8, 0.6])) < 1e-6


def test_q1_mean_and_q2_simplex():
    x = np.array([0.5, 1.0, 0.3])
    X = dyn.sample_Q1(0.3, x, 1.0, 1.0, S3, rng=RngStream(1), size=200_000)
    e = math.exp(-0.15)
    mean = x * e + 1.0 * S3.probs * lin.c_factor(-1.0, 0.3)
    assert np.allclose(X.mean(0), mean, rtol=0.01)
    Y = dyn.sample_Q2(0.3, x / x.sum(), 1.0, S3, rng=RngStream(2), size=1000)
    assert np.allclose(Y.sum(1), 1.0)


def test_sde_zero_noise_is_ode():
    p = dyn.GeneratorParams.general(0.0, [1.0, 2.0, 0.5], [1.0, 1.0, 1.0], S3, allow_zero_noise=True)
    x = dyn.sde_oracle(p, [2.0, 0.0, 1.0], 1.0, 1e-4, RngStream(0), 1)[0]
    b = np.array([1.0, 2.0, 0.5])
    ode = 1 / b + (np.array([2.0, 0.0, 1.0]) - 1 / b) * np.exp(-b)
    assert np.allclose(x, ode, atol=1e-3)


def test_general_rejects_zero_noise_by_default():
    with pytest.raises(dyn.ParameterError):
        dyn.GeneratorParams.general(0.0, 1.0, [1.0, 1.0, 1.0], S3)
