import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdp_lab import densities as d
from gdp_lab import samplers as smp
from gdp_lab.measures import AtomicMeasure, BaseSpace, DomainError, TestFunction
from gdp_lab.rng import RngStream

S2 = BaseSpace.finite([0.4, 0.6])
F2 = TestFunction.on_points([0.5, 2.0])
P3 = np.array([0.5, 0.3, 0.2])
UNIT = BaseSpace.unit_interval()

# independent high-precision oracles (direct mpmath quadrature of the u-integral,
# an ODE solve for the time-t Laplace functional), frozen here
ORACLE_PD_THETA = 1.0194736389032457344
ORACLE_PD_TWO = 1.1623212158960452200
ORACLE_JUMPS = 0.97962030075132930394
ORACLE_MBI = 0.37800078308469680809


def test_e1_and_domain():
    assert d.exp_integral_E1(1.0) == pytest.approx(0.21938393439552027368, rel=1e-14)
    with pytest.raises(DomainError):
        d.exp_integral_E1(0.0)


def test_rn_pd_theta_oracle():
    assert float(d.rn_pd_theta(P3, F2, 1.5, S2).value) == pytest.approx(ORACLE_PD_THETA, rel=1e-12)
    assert float(d.rn_pd_theta(P3, F2, 1.5, S2, quad=d.ADAPTIVE).value) == pytest.approx(ORACLE_PD_THETA, rel=1e-9)


def test_rn_pd_two_param_oracle():
    assert float(d.rn_pd_two_param(P3, F2, 0.4, 1.5, S2).value) == pytest.approx(ORACLE_PD_TWO, rel=1e-12)


def test_rn_jumps_oracle():
    assert float(d.rn_jumps_Tf(np.array([1.2, 0.4, 0.1]), F2, 1.5, 1.0, S2).value) == \
        pytest.approx(ORACLE_JUMPS, rel=1e-13)


def test_laplace_mbi_oracle_and_variants():
    fn = TestFunction.on_points
    args = (fn([0.5, 1.0]), fn([1.0, 2.0]), AtomicMeasure.from_dense(np.array([0.6, 0.8]), S2),
            AtomicMeasure.from_dense(np.array([1.0, 0.5]), S2), 0.5, fn([0.7, 1.3]))
    assert d.laplace_mbi_time_t(*args) == pytest.approx(ORACLE_MBI, rel=1e-12)
    assert abs(d.laplace_mbi_time_t(*args, variant="literal") - ORACLE_MBI) > 0.04


def test_laplace_mbi_small_t():
    fn = TestFunction.on_points
    mu = AtomicMeasure.from_dense(np.array([1.0, 0.5]), S2)
    v = d.laplace_mbi_time_t(fn([0.5, 1.0]), fn([1.0, 2.0]), AtomicMeasure.from_dense(np.array([0.6, 0.8]), S2),
                             mu, 1e-9, fn([0.7, 1.3]))
    assert v == pytest.approx(math.exp(-(0.7 + 0.65)), rel=1e-7)


def test_constant_f_gives_one_exactly():
    one = TestFunction.constant(1.0)
    assert d.rn_pd_theta(P3, TestFunction.constant(2.0), 1.0, S2).value == 1.0
    assert d.rn_pd_two_param(P3, F2, 0.5, 0.0, S2).value == 1.0
    mu = AtomicMeasure.from_dense(np.array([0.3, 1.2]), S2)
    assert d.rn_gamma_Tf(mu, one, 2.0, 1.0, S2).value == 1.0
    assert d.rn_dirichlet_Tf(mu, one, 2.0, S2).value == 1.0


def test_alpha_to_zero_limit():
    f = TestFunction.step([0.0, 0.5, 1.0], [0.6, 1.4])
    a = float(d.rn_pd_two_param(P3, f, 1e-6, 1.0, UNIT).value)
    b = float(d.rn_pd_theta(P3, f, 1.0, UNIT).value)
    assert a == pytest.approx(b, rel=1e-5)


def test_bracket_contains_central():
    P = smp.sample_pd(1.0, trunc=smp.TruncationPolicy.fixed(5), rng=RngStream(2), size=30)
    v = d.rn_pd_theta(P, F2, 1.0, S2, bracket=True)
    lo, hi = v.bracket
    assert np.all(lo <= v.log + 1e-12) and np.all(v.log <= hi + 1e-12)


def test_gauss_matches_adaptive_wide_ratio():
    f = TestFunction.on_points([0.1, 3.0])
    a = d.rn_pd_theta(P3, f, 0.7, S2, quad=d.QuadratureSpec(gauss_max_ratio=1e9)).log
    b = d.rn_pd_theta(P3, f, 0.7, S2, quad=d.ADAPTIVE).log
    assert a == pytest.approx(b, abs=1e-8)


def test_laplace_gamma_closed_form_and_domain():
    g = TestFunction.on_points([0.5, 2.0])
    assert d.laplace_gamma(2.0, 1.0, S2, g) == pytest.approx(1.5 ** -0.8 * 3.0 ** -1.2)
    with pytest.raises(DomainError):
        d.laplace_gamma(1.0, 1.0, S2, TestFunction.on_points([-2.0, 1.0]))


def test_hamiltonian_identity_unit_mass():
    mu = AtomicMeasure.from_dense(np.array([0.25, 0.75]), S2)
    assert d.hamiltonian_gamma(mu, 2.0, 0.5, S2) == pytest.approx(d.hamiltonian_dirichlet(mu, 2.0, S2), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_entropy_properties(p, q):
    a = AtomicMeasure.from_dense(np.array([p, 1 - p]), S2)
    b = AtomicMeasure.from_dense(np.array([q, 1 - q]), S2)
    assert d.entropy(a, b) >= -1e-15
    assert d.entropy(a, a) == pytest.approx(0.0, abs=1e-15)


def test_entropy_singular():
    a = AtomicMeasure.from_dense(np.array([0.0, 1.0]), S2)
    assert d.entropy(S2, a) == math.inf
    assert d.entropy(UNIT, AtomicMeasure(np.array([1.0]), np.array([0.3]), UNIT)) == math.inf


def test_tilt_constant_trivial_case():
    # c = 1, theta = alpha: Gamma(1 + alpha) / Gamma(2)
    assert d.tilt_constant(0.5, 0.5) == pytest.approx(math.gamma(1.5))


def test_lambda_functional_zero_f():
    mu = AtomicMeasure.from_dense(np.array([0.3, 1.0]), S2)
    z = TestFunction.constant(0.0)
    a = TestFunction.on_points([1.0, 2.0])
    assert d.lambda_functional(mu, z, a, a, AtomicMeasure.from_dense(np.array([1.0, 1.0]), S2)) == 0.0
