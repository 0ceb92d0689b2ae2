"""Random generators for GEM, Poisson-Dirichlet, gamma, stable and Dirichlet objects.

Every sampler takes ``rng`` (an :class:`~gdp_lab.rng.RngStream`, a numpy
``Generator`` or an integer seed) and an optional ``size``.  With ``size=None``
a single value object is returned; otherwise a batch holding ``size``
independent replicates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .measures import (AtomicMeasure, BaseSpace, ContractError, JumpSequence, MassPartition,
                       MeasureBatch, TestFunction)
from .rng import as_generator

_BLOCK = 32


class ParameterError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TruncationPolicy:
    """How to represent an infinite stick sequence: ``fixed-count`` K or ``tail-mass`` eps."""

    mode: str = "tail-mass"
    value: float = 1e-8

    def __post_init__(self):
        if self.mode == "fixed-count":
            if int(self.value) != self.value or self.value < 1:
                raise ParameterError("fixed-count truncation needs an integer K >= 1")
        elif self.mode == "tail-mass":
            if not 0 < self.value < 1:
                raise ParameterError("tail-mass truncation needs eps in (0, 1)")
        else:
            raise ParameterError(f"unknown truncation mode {self.mode!r}")

    @classmethod
    def fixed(cls, k: int) -> "TruncationPolicy":
        return cls("fixed-count", int(k))

    @classmethod
    def tail(cls, eps: float) -> "TruncationPolicy":
        return cls("tail-mass", float(eps))


DEFAULT_TRUNCATION = TruncationPolicy()


@dataclass(frozen=True, eq=False)
class GemSticks:
    """Sticks in size-biased (construction) order with their residual.

    ``sticks`` has shape ``(n,)`` for a single draw or ``(R, n)`` for a batch.
    """

    sticks: np.ndarray
    tail: np.ndarray | float

    def partition(self) -> MassPartition:
        if np.ndim(self.sticks) != 1:
            raise ContractError("partition() is defined for a single draw")
        return MassPartition(np.sort(self.sticks)[::-1], "simplex", float(self.tail))


@dataclass(frozen=True, eq=False)
class PartitionBatch:
    """Replicated mass partitions: descending rows plus per-row residual."""

    weights: np.ndarray
    tail: np.ndarray

    def __len__(self):
        return self.weights.shape[0]

    def row(self, i: int) -> MassPartition:
        w = self.weights[i]
        return MassPartition(w[w > 0], "simplex", float(self.tail[i]))


def _check_theta_alpha(theta, alpha):
    if not 0 <= alpha < 1:
        raise ParameterError("alpha must lie in [0, 1)")
    if alpha == 0 and not theta > 0:
        raise ParameterError("theta must be positive")
    if alpha > 0 and not theta > -alpha:
        raise ParameterError("theta must exceed -alpha")


def _stick_break(theta, alpha, R, trunc: TruncationPolicy, gen):
    """Sticks V (R, K) and residual prod(1 - U) (R,) for GEM(alpha, theta)."""
    if trunc.mode == "fixed-count":
        K = int(trunc.value)
        i = np.arange(1, K + 1)
        U = gen.beta(1.0 - alpha, theta + i * alpha, size=(R, K))
        rem = np.cumprod(1.0 - U, axis=1)
        prev = np.hstack([np.ones((R, 1)), rem[:, :-1]])
        return U * prev, rem[:, -1]
    eps = trunc.value
    cols, start, rem = [], 0, np.ones(R)
    while True:
        i = np.arange(start + 1, start + _BLOCK + 1)
        U = gen.beta(1.0 - alpha, theta + i * alpha, size=(R, _BLOCK))
        cum = np.cumprod(1.0 - U, axis=1) * rem[:, None]
        prev = np.hstack([rem[:, None], cum[:, :-1]])
        cols.append(U * prev)
        rem = cum[:, -1]
        start += _BLOCK
        if np.all(rem <= eps):
            break
        if start > 10_000_000:
            raise NumericError("stick-breaking failed to reach the requested tail mass")
    V = np.hstack(cols)
    # trim columns beyond the point where every row is below eps
    cum_rem = 1.0 - np.cumsum(V, axis=1)
    need = int(np.max(np.argmax(cum_rem <= eps, axis=1))) + 1
    if need < V.shape[1]:
        rem = rem + V[:, need:].sum(axis=1)
        V = V[:, :need]
    return V, rem


def sample_gem(theta: float, n: int, rng, size=None) -> GemSticks:
    """First ``n`` GEM(theta) sticks V_k = U_k prod_{i<k}(1 - U_i), U_i ~ Beta(1, theta)."""
    _check_theta_alpha(theta, 0.0)
    if n < 1:
        raise ParameterError("n must be at least 1")
    gen = as_generator(rng)
    V, rem = _stick_break(float(theta), 0.0, 1 if size is None else int(size),
                          TruncationPolicy.fixed(n), gen)
    return GemSticks(V[0], float(rem[0])) if size is None else GemSticks(V, rem)


def sample_gem_two_param(alpha: float, theta: float, n: int, rng, size=None) -> GemSticks:
    """First ``n`` sticks of GEM(alpha, theta): U_i ~ Beta(1 - alpha, theta + i alpha)."""
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    _check_theta_alpha(theta, alpha)
    if n < 1:
        raise ParameterError("n must be at least 1")
    gen = as_generator(rng)
    V, rem = _stick_break(float(theta), float(alpha), 1 if size is None else int(size),
                          TruncationPolicy.fixed(n), gen)
    return GemSticks(V[0], float(rem[0])) if size is None else GemSticks(V, rem)


def sample_pd(theta: float, alpha: float = 0.0, trunc: TruncationPolicy = DEFAULT_TRUNCATION,
              rng=None, size=None):
    """PD(theta) or PD(alpha, theta): GEM sticks sorted descending after truncation.

    Sorting after truncation means the reported tail also bounds every omitted
    atom.
    """
    _check_theta_alpha(theta, alpha)
    gen = as_generator(rng)
    V, rem = _stick_break(float(theta), float(alpha), 1 if size is None else int(size), trunc, gen)
    W = -np.sort(-V, axis=1)
    if size is None:
        w = W[0]
        return MassPartition(w[w > 0], "simplex", float(rem[0]))
    return PartitionBatch(W, rem)


def _wrap_measure(W, L, space, tail, size):
    if size is None:
        keep = W[0] > 0
        return AtomicMeasure(W[0][keep], L[0][keep], space, float(tail[0]))
    return MeasureBatch(W, L, space, tail)


def sample_dirichlet_process(theta: float, nu0: BaseSpace, trunc: TruncationPolicy = DEFAULT_TRUNCATION,
                             rng=None, size=None, alpha: float = 0.0):
    """Dirichlet process sum_i V_i delta_{xi_i} (two-parameter version when ``alpha > 0``).

    Total mass is ``1 - tail``; the residual stick is not placed anywhere.
    """
    _check_theta_alpha(theta, alpha)
    gen = as_generator(rng)
    R = 1 if size is None else int(size)
    V, rem = _stick_break(float(theta), float(alpha), R, trunc, gen)
    L = nu0.sample(gen, V.shape)
    return _wrap_measure(V, L, nu0, rem, size)


def sample_dirichlet_vector(thetas, rng, size=None) -> np.ndarray:
    """Dirichlet(theta_1, ..., theta_m) probability vector(s) via normalized gammas."""
    th = np.asarray(thetas, float)
    if th.ndim != 1 or th.size < 1 or np.any(th <= 0):
        raise ParameterError("Dirichlet parameters must be a nonempty positive vector")
    gen = as_generator(rng)
    shape = th.shape if size is None else (int(size), th.size)
    g = gen.standard_gamma(np.broadcast_to(th, shape))
    return g / g.sum(axis=-1, keepdims=True)


def sample_gamma_measure(theta: float, nu0: BaseSpace, beta: float = 1.0,
                         trunc: TruncationPolicy = DEFAULT_TRUNCATION, rng=None, size=None,
                         method: str = "decomposition"):
    """Gamma random measure with shape theta*nu0 and scale beta.

    ``decomposition`` builds beta * sigma * (PD atoms at i.i.d. nu0 locations)
    with sigma ~ Gamma(theta, 1) independent.  ``coordinates`` (finite spaces
    only) draws the independent Gamma(theta nu0(s), beta) masses directly, with
    no truncation.
    """
    if not theta > 0 or not beta > 0:
        raise ParameterError("theta and beta must be positive")
    gen = as_generator(rng)
    R = 1 if size is None else int(size)
    if method == "coordinates":
        nu0.require_finite()
        coords = beta * gen.standard_gamma(np.broadcast_to(theta * nu0.probs, (R, nu0.size)))
        if size is None:
            return AtomicMeasure.from_dense(coords[0], nu0)
        return MeasureBatch.from_dense(coords, nu0)
    if method != "decomposition":
        raise ValueError(f"unknown method {method!r}")
    sigma = gen.standard_gamma(theta, size=R)
    V, rem = _stick_break(float(theta), 0.0, R, trunc, gen)
    L = nu0.sample(gen, V.shape)
    scale = beta * sigma
    return _wrap_measure(V * scale[:, None], L, nu0, rem * scale, size)


def sample_gamma_measure_with_atoms(theta: float, nu0: BaseSpace, beta: float, atom_locations,
                                    atom_mask, trunc: TruncationPolicy = DEFAULT_TRUNCATION,
                                    rng=None) -> MeasureBatch:
    """Gamma measure whose shape measure is ``sum_j delta_{x_j} + theta nu0``.

    ``atom_locations`` is ``(R, n)``; only entries with ``atom_mask`` True count.
    Each listed atom receives an independent Gamma(1, beta) mass, added to an
    independent gamma measure with shape theta nu0 (additive property).
    """
    gen = as_generator(rng)
    X = np.asarray(atom_locations)
    mask = np.asarray(atom_mask, bool)
    R = X.shape[0]
    base = sample_gamma_measure(theta, nu0, beta, trunc, gen, size=R)
    extra = beta * gen.standard_exponential(X.shape) * mask
    locs = np.where(mask, X, 0 if nu0.is_finite else 0.0)
    return MeasureBatch.concat_atoms([MeasureBatch(extra, locs, nu0), base])


def sample_finite_gamma_stationary(a: TestFunction, b: TestFunction, mu0: AtomicMeasure, rng,
                                   size=None):
    """Invariant law of the branching diffusion with coefficients (a, b, mu0) on a finite space.

    Coordinates are independent Gamma(mu0(s)/a(s), scale a(s)/b(s)).
    """
    space = mu0.space
    if not space.is_finite:
        raise ContractError("stationary sampler requires a finite-discrete base space")
    a.require_positive()
    b.require_positive()
    av, bv, m0 = a.values_on(space), b.values_on(space), mu0.dense()
    gen = as_generator(rng)
    R = 1 if size is None else int(size)
    shape = m0 / av
    coords = np.zeros((R, space.size))
    live = shape > 0
    coords[:, live] = gen.standard_gamma(np.broadcast_to(shape[live], (R, int(live.sum())))) \
        * (av / bv)[live]
    if size is None:
        return AtomicMeasure.from_dense(coords[0], space)
    return MeasureBatch.from_dense(coords, space)


# --- jump sequences ---------------------------------------------------------

def _e1_bracket(y):
    """log-x bracket with E1(x_hi) <= y <= E1(x_lo), from e^-x ln(1+2/x)/2 < E1 < e^-x ln(1+1/x)."""
    x_hi = np.maximum(1.0, -np.log(y))
    log_lo = np.minimum(0.0, np.log(2.0) - 2.0 * math.e * y)
    return log_lo, np.log(x_hi)


def solve_e1(y, tol: float = 1e-12, max_iter: int = 400) -> np.ndarray:
    """Solve E1(x) = y (y > 0) by bisection on log x."""
    y = np.asarray(y, float)
    if np.any(y <= 0):
        raise ParameterError("E1 targets must be positive")
    lo, hi = _e1_bracket(y)
    if np.any(special.exp1(np.exp(lo)) < y) or np.any(special.exp1(np.exp(hi)) > y):
        raise NumericError("E1 bracket invalid")
    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        above = special.exp1(np.exp(mid)) > y
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= tol):
            return np.exp(0.5 * (lo + hi))
    worst = float(np.max(hi - lo))
    raise NumericError(f"E1 root-finding did not converge: log-bracket width {worst:.3g} "
                       f"after {max_iter} iterations")


def sample_gamma_jumps_inverse_levy(theta: float, n: int, rng, size=None):
    """Largest ``n`` jumps of the gamma subordinator: theta E1(x_i) = Gamma_i.

    Gamma_i are arrival times of a unit-rate Poisson process.  ``tail_bound``
    is the conditional mean of the omitted mass, theta (1 - exp(-x_n)).
    """
    if not theta > 0:
        raise ParameterError("theta must be positive")
    if n < 1:
        raise ParameterError("n must be at least 1")
    gen = as_generator(rng)
    R = 1 if size is None else int(size)
    arrivals = np.cumsum(gen.standard_exponential((R, n)), axis=1)
    x = solve_e1(arrivals / theta)
    tail = theta * -np.expm1(-x[:, -1])
    if size is None:
        return JumpSequence(x[0], float(tail[0]))
    return x, tail


def sample_stable_jumps(alpha: float, c: float, n: int, rng, size=None):
    """Largest ``n`` jumps over (0,1] of the alpha-stable subordinator with Levy measure
    c alpha / Gamma(1-alpha) s^(-alpha-1) ds.

    ``tail_bound`` is the conditional mean omitted mass
    c alpha rho_n^(1-alpha) / (Gamma(1-alpha)(1-alpha)).
    """
    if not 0 < alpha < 1 or not c > 0:
        raise ParameterError("need 0 < alpha < 1 and c > 0")
    if n < 1:
        raise ParameterError("n must be at least 1")
    gen = as_generator(rng)
    R = 1 if size is None else int(size)
    arrivals = np.cumsum(gen.standard_exponential((R, n)), axis=1)
    g1a = special.gamma(1.0 - alpha)
    rho = (g1a * arrivals / c) ** (-1.0 / alpha)
    tail = c * alpha * rho[:, -1] ** (1.0 - alpha) / (g1a * (1.0 - alpha))
    if size is None:
        return JumpSequence(rho[0], float(tail[0]))
    return rho, tail


def sample_stable_measure(alpha: float, c: float, nu0: BaseSpace, n: int, rng, size=None):
    """nu0-marked stable subordinator sum_i rho_i delta_{xi_i}, truncated to n jumps."""
    gen = as_generator(rng)
    R = 1 if size is None else int(size)
    rho, tail = sample_stable_jumps(alpha, c, n, gen, size=R)
    L = nu0.sample(gen, rho.shape)
    return _wrap_measure(rho, L, nu0, tail, size)
