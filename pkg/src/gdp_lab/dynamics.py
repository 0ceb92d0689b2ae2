"""Measure-valued diffusions on finite base spaces and their transition functions.

Points of M(S) on a finite space are coordinate vectors; a batch is an array of
shape (R, |S|).  Variational derivatives of cylinder functions then reduce to
coordinate partials.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import lineages
from .measures import (AtomicMeasure, BaseSpace, ContractError, DomainError, MeasureBatch,
                       TestFunction)
from .rng import as_generator
from .samplers import (DEFAULT_TRUNCATION, ParameterError, TruncationPolicy,
                       sample_gamma_measure_with_atoms)


# --- outer maps -------------------------------------------------------------

class Outer:
    """phi: R^n -> R with analytic gradient and Hessian; inputs have shape (..., n)."""

    def value(self, y):
        raise NotImplementedError

    def grad(self, y):
        raise NotImplementedError

    def hess(self, y):
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(Outer):
    c: tuple

    def value(self, y):
        return y @ np.asarray(self.c)

    def grad(self, y):
        return np.broadcast_to(np.asarray(self.c, float), y.shape).copy()

    def hess(self, y):
        n = len(self.c)
        return np.zeros(y.shape[:-1] + (n, n))


@dataclass(frozen=True)
class Exponential(Outer):
    """exp(-c . y)."""

    c: tuple

    def value(self, y):
        return np.exp(-(y @ np.asarray(self.c)))

    def grad(self, y):
        c = np.asarray(self.c)
        return -self.value(y)[..., None] * c

    def hess(self, y):
        c = np.asarray(self.c)
        return self.value(y)[..., None, None] * np.outer(c, c)


@dataclass(frozen=True)
class Monomial(Outer):
    """prod_i y_i^{k_i} for nonnegative integer powers."""

    powers: tuple

    def value(self, y):
        return np.prod(y ** np.asarray(self.powers, float), axis=-1)

    def grad(self, y):
        k = np.asarray(self.powers, float)
        n = k.size
        out = np.empty(y.shape)
        for i in range(n):
            kk = k.copy()
            kk[i] -= 1
            out[..., i] = k[i] * np.prod(y ** np.maximum(kk, 0), axis=-1) if k[i] else 0.0
        return out

    def hess(self, y):
        k = np.asarray(self.powers, float)
        n = k.size
        out = np.zeros(y.shape + (n,))
        for i in range(n):
            for j in range(n):
                kk = k.copy()
                coef = k[i]
                kk[i] -= 1
                coef *= kk[j]
                kk[j] -= 1
                if coef:
                    out[..., i, j] = coef * np.prod(y ** np.maximum(kk, 0), axis=-1)
        return out


@dataclass(frozen=True)
class Constant(Outer):
    c: float
    n: int = 1

    def value(self, y):
        return np.full(y.shape[:-1], float(self.c))

    def grad(self, y):
        return np.zeros(y.shape)

    def hess(self, y):
        return np.zeros(y.shape + (y.shape[-1],))


@dataclass(frozen=True)
class Custom(Outer):
    fn: Callable
    gradient: Callable
    hessian: Callable

    def value(self, y):
        return self.fn(y)

    def grad(self, y):
        return self.gradient(y)

    def hess(self, y):
        return self.hessian(y)


@dataclass(frozen=True)
class ProductOuter(Outer):
    """phi1(y[:k]) phi2(y[k:])."""

    left: Outer
    right: Outer
    k: int

    def value(self, y):
        return self.left.value(y[..., :self.k]) * self.right.value(y[..., self.k:])

    def grad(self, y):
        a, b = y[..., :self.k], y[..., self.k:]
        va, vb = self.left.value(a), self.right.value(b)
        return np.concatenate([self.left.grad(a) * vb[..., None], va[..., None] * self.right.grad(b)],
                              axis=-1)

    def hess(self, y):
        a, b = y[..., :self.k], y[..., self.k:]
        va, vb = self.left.value(a), self.right.value(b)
        ga, gb = self.left.grad(a), self.right.grad(b)
        top = np.concatenate([self.left.hess(a) * vb[..., None, None], ga[..., :, None] * gb[..., None, :]],
                             axis=-1)
        bot = np.concatenate([gb[..., :, None] * ga[..., None, :], va[..., None, None] * self.right.hess(b)],
                             axis=-1)
        return np.concatenate([top, bot], axis=-2)


@dataclass(frozen=True)
class HomogeneousOuter(Outer):
    """psi(y0, y) = y0^p phi(y / y0), the outer map of r^p Phi(mu / r)."""

    inner: Outer
    p: int = 3

    def value(self, y):
        y0, z = y[..., 0], y[..., 1:] / y[..., :1]
        return y0 ** self.p * self.inner.value(z)

    def grad(self, y):
        p = self.p
        y0, z = y[..., 0], y[..., 1:] / y[..., :1]
        phi, g = self.inner.value(z), self.inner.grad(z)
        g0 = y0 ** (p - 1) * (p * phi - np.sum(g * z, axis=-1))
        return np.concatenate([g0[..., None], (y0 ** (p - 1))[..., None] * g], axis=-1)

    def hess(self, y):
        p = self.p
        y0, z = y[..., 0], y[..., 1:] / y[..., :1]
        phi, g, h = self.inner.value(z), self.inner.grad(z), self.inner.hess(z)
        s = y0 ** (p - 2)
        gz = np.sum(g * z, axis=-1)
        hz = h @ z[..., :, None]
        h00 = s * (p * (p - 1) * phi - 2 * (p - 1) * gz + (z[..., None, :] @ hz)[..., 0, 0])
        h0j = s[..., None] * ((p - 1) * g - hz[..., 0])
        hjk = s[..., None, None] * h
        top = np.concatenate([h00[..., None, None], h0j[..., None, :]], axis=-1)
        bot = np.concatenate([h0j[..., :, None], hjk], axis=-1)
        return np.concatenate([top, bot], axis=-2)


# --- cylinder functions -----------------------------------------------------

def _coords(point) -> np.ndarray:
    if isinstance(point, (AtomicMeasure, MeasureBatch)):
        point.space.require_finite()
        return point.dense()
    return np.asarray(point, float)


class CylinderFunction:
    """phi(<mu, f_1>, ..., <mu, f_n>) on a finite base space.

    ``inner`` holds the values f_i(s) as an (n, |S|) array.
    """

    def __init__(self, inner, outer: Outer):
        self.inner = np.atleast_2d(np.asarray(inner, float))
        self.outer = outer

    @classmethod
    def of(cls, space: BaseSpace, functions, outer: Outer) -> "CylinderFunction":
        space.require_finite()
        rows = [f.values_on(space) if isinstance(f, TestFunction) else np.asarray(f, float)
                for f in functions]
        return cls(np.vstack(rows), outer)

    @classmethod
    def linear(cls, g) -> "CylinderFunction":
        return cls(np.atleast_2d(g), Linear((1.0,)))

    @classmethod
    def exponential(cls, g, c: float = 1.0) -> "CylinderFunction":
        """exp(-c <mu, g>)."""
        return cls(np.atleast_2d(g), Exponential((c,)))

    @classmethod
    def monomial(cls, gs, powers) -> "CylinderFunction":
        return cls(np.atleast_2d(gs), Monomial(tuple(powers)))

    @classmethod
    def constant(cls, c: float, size: int) -> "CylinderFunction":
        return cls(np.ones((1, size)), Constant(c))

    def homogeneous_lift(self, p: int = 3) -> "CylinderFunction":
        """mu -> r(mu)^p * self(mu / r(mu))."""
        return CylinderFunction(np.vstack([np.ones(self.inner.shape[1]), self.inner]),
                                HomogeneousOuter(self.outer, p))

    def __mul__(self, other: "CylinderFunction") -> "CylinderFunction":
        return CylinderFunction(np.vstack([self.inner, other.inner]),
                                ProductOuter(self.outer, other.outer, self.inner.shape[0]))

    @property
    def size(self) -> int:
        return self.inner.shape[1]

    def _y(self, x):
        return _coords(x) @ self.inner.T

    def __call__(self, point):
        return self.outer.value(self._y(point))

    def first_variation(self, point):
        """delta F / delta mu(s), shape (..., |S|)."""
        return self.outer.grad(self._y(point)) @ self.inner

    def second_variation(self, point):
        """delta^2 F / delta mu(s) delta mu(t), shape (..., |S|, |S|)."""
        return np.einsum("...ij,is,jt->...st", self.outer.hess(self._y(point)), self.inner, self.inner)

    def second_variation_diag(self, point):
        return np.einsum("...ij,is,js->...s", self.outer.hess(self._y(point)), self.inner, self.inner)

    def partials_error(self, y, h: float = 1e-5) -> float:
        """Largest relative gap between the analytic partials and central differences at y."""
        y = np.asarray(y, float)
        n = y.size
        g, H = self.outer.grad(y), self.outer.hess(y)
        worst = 0.0
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            fd_g = (self.outer.value(y + e) - self.outer.value(y - e)) / (2 * h)
            fd_h = (self.outer.grad(y + e) - self.outer.grad(y - e)) / (2 * h)
            scale_g = max(1.0, abs(g[i]))
            worst = max(worst, abs(fd_g - g[i]) / scale_g,
                        float(np.max(np.abs(fd_h - H[:, i]) / np.maximum(1.0, np.abs(H[:, i])))))
        return worst


# --- generators -------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorParams:
    """One of MBI(theta, lambda, nu0), FVP(theta, nu0) or General(a, b, mu0)."""

    variant: str
    space: BaseSpace
    theta: float | None = None
    lam: float | None = None
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    mu0: np.ndarray | None = None

    @classmethod
    def mbi(cls, theta: float, lam: float, space: BaseSpace) -> "GeneratorParams":
        if theta <= 0:
            raise ParameterError("theta must be positive")
        space.require_finite()
        return cls("MBI", space, theta=theta, lam=lam)

    @classmethod
    def fvp(cls, theta: float, space: BaseSpace) -> "GeneratorParams":
        if theta <= 0:
            raise ParameterError("theta must be positive")
        space.require_finite()
        return cls("FVP", space, theta=theta)

    @classmethod
    def general(cls, a, b, mu0, space: BaseSpace, allow_zero_noise: bool = False) -> "GeneratorParams":
        space.require_finite()
        vals = lambda g: g.values_on(space) if isinstance(g, TestFunction) else \
            np.broadcast_to(np.asarray(g, float), (space.size,)).copy()
        a, b = vals(a), vals(b)
        m0 = mu0.dense() if isinstance(mu0, AtomicMeasure) else vals(mu0)
        if np.any(a < 0) or (not allow_zero_noise and np.any(a <= 0)) or np.any(b <= 0):
            raise ParameterError("a and b must be positive on every location")
        if np.any(m0 < 0):
            raise ParameterError("mu0 must be a nonnegative measure")
        return cls("General", space, a=a, b=b, mu0=m0)

    def coefficients(self):
        """(a, b, mu0) arrays; MBI maps to a = 1/2, b = lambda/2, mu0 = theta nu0 / 2."""
        if self.variant == "General":
            return self.a, self.b, self.mu0
        if self.variant == "MBI":
            S = self.space.size
            return np.full(S, 0.5), np.full(S, self.lam / 2.0), self.theta * np.asarray(self.space.probs) / 2.0
        raise ContractError("the FVP generator has no branching coefficients")


def apply_generator(params: GeneratorParams, F: CylinderFunction, point) -> np.ndarray:
    """Value of the generator applied to F at ``point`` (exact via analytic partials)."""
    params.space.require_finite()
    x = _coords(point)
    if params.variant == "FVP":
        tot = x.sum(axis=-1)
        if np.any(np.abs(tot - 1.0) > 1e-9):
            raise DomainError("the FVP generator acts on probability measures")
        y = x @ F.inner.T
        g, H = F.outer.grad(y), F.outer.hess(y)
        nf = x @ F.inner.T
        second = np.einsum("...ij,...s,is,js->...", H, x, F.inner, F.inner) - \
            np.einsum("...ij,...i,...j->...", H, nf, nf)
        drift = np.einsum("...i,...i->...", g, np.asarray(params.space.probs) @ F.inner.T - nf)
        return 0.5 * (second + params.theta * drift)
    a, b, mu0 = params.coefficients()
    d2 = F.second_variation_diag(x)
    d1 = F.first_variation(x)
    return np.sum(x * a * d2, axis=-1) + np.sum((mu0 - x * b) * d1, axis=-1)


def carre_du_champ(params: GeneratorParams, F: CylinderFunction, G: CylinderFunction, point):
    """Gamma(F, G) = <mu, a dF dG>; for FVP the sampling covariance form
    (1/2)[<nu, dF dG> - <nu, dF><nu, dG>]."""
    x = _coords(point)
    dF, dG = F.first_variation(x), G.first_variation(x)
    if params.variant == "FVP":
        return 0.5 * (np.sum(x * dF * dG, axis=-1) - np.sum(x * dF, axis=-1) * np.sum(x * dG, axis=-1))
    a, _, _ = params.coefficients()
    return np.sum(x * a * dF * dG, axis=-1)


@dataclass(frozen=True)
class ProjectionResidual:
    lhs: float
    rhs: float
    residual: float
    relative: float


def check_projection_identity(theta: float, lam: float, Phi: CylinderFunction, mu, constant: float = 1.0,
                              nu0: BaseSpace | None = None) -> ProjectionResidual:
    """Compare L F(mu) with r^2 A Phi(mu_hat) + 3 r^2 ((theta - lambda r)/2 + constant) Phi(mu_hat)
    for F = r^3 Phi(mu / r).

    The identity holds with ``constant = 1``; any other constant leaves a residual
    of 3 r^2 (1 - constant) Phi(mu_hat).
    """
    space = nu0 if nu0 is not None else getattr(mu, "space", None)
    if space is None:
        raise ContractError("a finite base space is required")
    space.require_finite()
    x = _coords(mu)
    r = float(x.sum())
    if r <= 0:
        raise DomainError("the identity needs mu(S) > 0")
    F = Phi.homogeneous_lift(3)
    lhs = float(apply_generator(GeneratorParams.mbi(theta, lam, space), F, x))
    nu = x / r
    phi = float(Phi(nu))
    rhs = r * r * float(apply_generator(GeneratorParams.fvp(theta, space), Phi, nu)) + \
        3 * r * r * ((theta - lam * r) / 2 + constant) * phi
    res = abs(lhs - rhs)
    return ProjectionResidual(lhs, rhs, res, res / max(abs(lhs), abs(rhs), 1e-300))


# --- transition functions ---------------------------------------------------

def _starts(mu, size):
    x = _coords(mu)
    if x.ndim == 1:
        R = 1 if size is None else size
        x = np.broadcast_to(x, (R, x.size))
    return x


def _multinomial(gen, n, p):
    tot = p.sum(axis=1, keepdims=True)
    p = np.where(tot > 0, p / np.where(tot > 0, tot, 1.0), 1.0 / p.shape[1])
    return gen.multinomial(n, p)


def sample_Q1(t: float, mu, theta: float, lam: float, nu0: BaseSpace, trunc: TruncationPolicy = DEFAULT_TRUNCATION,
              rng=None, size: int | None = None, counts=None):
    """Draw from the MBI transition function started at ``mu`` (one start or a batch).

    Finite space: n ~ Poisson(mu(S)/C(lambda, t)), the n ancestors are placed by
    Multinomial(n, mu/mu(S)) and each coordinate is Gamma(ancestors + theta nu0(s),
    scale C(-lambda, t)); returns an (R, |S|) array.  On the unit interval the
    start must be atomic and a :class:`MeasureBatch` is returned.
    ``counts`` overrides the Poisson draw of n (used by the fixed-time identities).
    """
    if t <= 0:
        raise ParameterError("t must be positive")
    gen = as_generator(rng)
    scale = lineages.c_factor(-lam, t)
    if nu0.is_finite:
        x = _starts(mu, size)
        r = x.sum(axis=1)
        n = gen.poisson(r / lineages.c_factor(lam, t)) if counts is None else np.asarray(counts)
        anc = _multinomial(gen, n, x)
        return scale * gen.standard_gamma(anc + theta * np.asarray(nu0.probs))
    return _general_mixture(t, mu, theta, nu0, trunc, gen, size, scale,
                            lambda r: gen.poisson(r / lineages.c_factor(lam, t)) if counts is None
                            else np.asarray(counts))


def _ancestor_locations(gen, mu, n):
    """(R, max n) locations drawn from each row's normalized atoms, with a validity mask."""
    W = mu.weights / mu.weights.sum(axis=1, keepdims=True)
    cum = np.cumsum(W, axis=1)
    k = int(n.max()) if n.size else 0
    u = gen.random((W.shape[0], max(k, 1)))
    idx = np.minimum(np.array([np.searchsorted(c, row) for c, row in zip(cum, u)]), W.shape[1] - 1)
    locs = np.take_along_axis(mu.locations, idx, axis=1)
    mask = np.arange(max(k, 1))[None, :] < n[:, None]
    return locs, mask


def _general_mixture(t, mu, theta, nu0, trunc, gen, size, scale, draw_n):
    if isinstance(mu, AtomicMeasure):
        R = 1 if size is None else size
        mu = MeasureBatch(np.broadcast_to(mu.weights, (R, len(mu))),
                          np.broadcast_to(mu.locations, (R, len(mu))), mu.space)
    n = np.asarray(draw_n(mu.total_mass))
    locs, mask = _ancestor_locations(gen, mu, n)
    return sample_gamma_measure_with_atoms(theta, nu0, scale, locs, mask, trunc, gen)


def _coalescent_counts(theta, t, R, gen):
    pmf = lineages.tavare_distribution(theta, t)
    if pmf.method != "series":
        return lineages.simulate_kingman(theta, t, rng=gen, size=R)
    p = pmf.probs / pmf.probs.sum()
    return gen.choice(p.size, size=R, p=p)


def sample_Q2(t: float, nu, theta: float, nu0: BaseSpace, trunc: TruncationPolicy = DEFAULT_TRUNCATION,
              rng=None, size: int | None = None, counts=None):
    """Draw from the FVP transition function started at the probability ``nu``.

    Same mixture as :func:`sample_Q1` with n drawn from the coalescent pmf d_n(t)
    and Dirichlet components.
    """
    if t <= 0:
        raise ParameterError("t must be positive")
    gen = as_generator(rng)
    if nu0.is_finite:
        x = _starts(nu, size)
        if np.any(np.abs(x.sum(axis=1) - 1.0) > 1e-9):
            raise DomainError("the FVP starts from a probability measure")
        n = _coalescent_counts(theta, t, x.shape[0], gen) if counts is None else np.asarray(counts)
        anc = _multinomial(gen, n, x)
        g = gen.standard_gamma(anc + theta * np.asarray(nu0.probs))
        return g / g.sum(axis=1, keepdims=True)
    out = _general_mixture(t, nu, theta, nu0, trunc, gen, size, 1.0,
                           lambda r: _coalescent_counts(theta, t, r.size, gen) if counts is None
                           else np.asarray(counts))
    tot = out.total_mass
    return MeasureBatch(out.weights / tot[:, None], out.locations, out.space)


@dataclass
class FixedTimeSamples:
    """Paired draws for the fixed-time identities.

    ``Y_counts`` / ``Y_route``: N(t) from the death chain, then the gamma measure.
    ``Y_direct``: the MBI transition function.  ``X_counts`` / ``X_route``:
    N(tau_t) from the time change, then the normalized gamma measure.
    ``X_direct``: the FVP transition function.  ``exhausted`` flags time-change
    paths whose clock never reached t.
    """

    Y_counts: np.ndarray
    Y_route: np.ndarray
    Y_direct: np.ndarray
    X_counts: np.ndarray
    X_route: np.ndarray
    X_direct: np.ndarray
    exhausted: np.ndarray


def sample_fixed_time_identities(t: float, mu, theta: float, lam: float, nu0: BaseSpace, rng, size: int,
                                 trunc: TruncationPolicy = DEFAULT_TRUNCATION) -> FixedTimeSamples:
    """Both routes to the laws of Y_t (started at mu) and X_t (started at mu/mu(S))."""
    nu0.require_finite()
    gen = as_generator(rng)
    x = _coords(mu)
    r = float(x.sum())
    if r <= 0:
        raise DomainError("need mu(S) > 0")
    Yn = lineages.death_counts_at(r, lam, t, size, gen)
    Y_route = sample_Q1(t, x, theta, lam, nu0, rng=gen, size=size, counts=Yn)
    Y_direct = sample_Q1(t, x, theta, lam, nu0, rng=gen, size=size)
    Xn, exhausted = lineages.time_changed_counts(r, lam, theta, t, size, gen)
    anc = _multinomial(gen, Xn, np.broadcast_to(x / r, (size, x.size)))
    g = lineages.c_factor(-lam, t) * gen.standard_gamma(anc + theta * np.asarray(nu0.probs))
    X_route = g / g.sum(axis=1, keepdims=True)
    X_direct = sample_Q2(t, x / r, theta, nu0, rng=gen, size=size)
    return FixedTimeSamples(Yn, Y_route, Y_direct, Xn, X_route, X_direct, exhausted)


def sde_oracle(params: GeneratorParams, mu_start, t: float, step: float = 1e-4, rng=None,
               size: int | None = None) -> np.ndarray:
    """Full-truncation Euler-Maruyama for d mu_s = (mu0_s - b_s mu_s) dt + sqrt(2 a_s mu_s) dW_s.

    Weak error is O(step).  Returns (R, |S|) coordinates at time t.
    """
    a, b, mu0 = params.coefficients()
    gen = as_generator(rng)
    x = np.array(_starts(mu_start, size), float)
    k = max(1, int(round(t / step)))
    h = t / k
    sq = np.sqrt(2.0 * a * h)
    for _ in range(k):
        xp = np.maximum(x, 0.0)
        x = x + (mu0 - b * xp) * h + sq * np.sqrt(xp) * gen.standard_normal(x.shape)
    return np.maximum(x, 0.0)
