"""Closed-form evaluators: E1, Laplace functionals, Radon-Nikodym derivatives,
formal Hamiltonians and the Lambda functional.

Densities are returned as :class:`LogValue` (log-magnitude and sign).  Every
``rn_*`` evaluator accepts either a single value object or a batch and then
returns arrays inside the ``LogValue``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .measures import (AtomicMeasure, BaseSpace, DomainError, JumpSequence, MassPartition,
                       MeasureBatch, TestFunction, normalize)
from .samplers import NumericError, PartitionBatch

# cap on the size of the (replicate, atom, node, point) work array
_WORK_CAP = 8_000_000


@dataclass(frozen=True)
class LogValue:
    """A real number stored as ``sign * exp(log)``; fields may be arrays."""

    log: np.ndarray | float
    sign: np.ndarray | int = 1
    error: float | np.ndarray = 0.0
    bracket: tuple | None = None

    @property
    def value(self):
        return self.sign * np.exp(self.log)

    def __float__(self):
        return float(self.value)

    def __mul__(self, other: "LogValue") -> "LogValue":
        return LogValue(self.log + other.log, self.sign * other.sign,
                        np.abs(self.error) + np.abs(other.error))

    @classmethod
    def of(cls, x) -> "LogValue":
        x = np.asarray(x, float)
        with np.errstate(divide="ignore"):
            return cls(np.log(np.abs(x)), np.sign(x).astype(int))


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature for integrals over (0, infinity).

    ``adaptive``: u = s t/(1-t) followed by adaptive Gauss-Kronrod (scalar,
    error-estimated).  ``gauss``: generalized Gauss-Laguerre, vectorized over
    replicates.  ``nodes=0`` sizes the rule from the spread max(1/f)/min(1/f),
    which governs how far the integrand is from a pure gamma kernel; spreads
    beyond ``gauss_max_ratio`` are routed to the adaptive scheme.
    """

    scheme: str = "gauss"
    rtol: float = 1e-9
    max_subdivisions: int = 200
    nodes: int = 0
    gauss_max_ratio: float = 50.0

    def rule_size(self, ratio: float) -> int:
        if self.nodes:
            return self.nodes
        return int(np.clip(np.ceil(8 * ratio), 32, 400))

    def __post_init__(self):
        if self.scheme not in ("adaptive", "gauss"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")


ADAPTIVE = QuadratureSpec("adaptive")
GAUSS = QuadratureSpec("gauss")


# --- special functions ------------------------------------------------------

def exp_integral_E1(x):
    """E1(x) = int_x^inf e^-z / z dz for x > 0."""
    xa = np.asarray(x, float)
    if np.any(~(xa > 0)):
        raise DomainError("E1 requires x > 0")
    out = special.exp1(xa)
    return float(out) if np.ndim(x) == 0 else out


def phi(x):
    """x log x - (x - 1), with phi(0) = 1."""
    x = np.asarray(x, float)
    if np.any(x < 0):
        raise DomainError("phi requires x >= 0")
    out = special.xlogy(x, x) - (x - 1.0)
    return float(out) if out.ndim == 0 else out


def _as_probs(m, space: BaseSpace | None = None) -> np.ndarray:
    if isinstance(m, BaseSpace):
        return np.asarray(m.probs)
    d = np.asarray(m.dense(), float)
    return d / d.sum()


def entropy(nu1, nu2) -> float:
    """Relative entropy Ent(nu1 | nu2); +inf unless nu1 << nu2.

    Arguments are :class:`BaseSpace` (meaning its nu0) or :class:`AtomicMeasure`
    on a finite space.  On the unit interval, a TestFunction argument is read
    as a density against nu0; any atomic argument paired with a diffuse one is
    singular and gives +inf.
    """
    sp = next((m if isinstance(m, BaseSpace) else getattr(m, "space", None)) for m in (nu1, nu2)
              if not isinstance(m, TestFunction))
    if sp is not None and sp.is_finite:
        p, q = _as_probs(nu1), _as_probs(nu2)
        if np.any((p > 0) & (q <= 0)):
            return math.inf
        return float(np.sum(special.xlogy(p, p) - special.xlogy(p, np.where(p > 0, q, 1.0))))
    diffuse = lambda m: isinstance(m, (BaseSpace, TestFunction))
    if not (diffuse(nu1) and diffuse(nu2)):
        if isinstance(nu1, AtomicMeasure) and isinstance(nu2, AtomicMeasure):
            a, b = nu1.merged(), nu2.merged()
            qa = dict(zip(b.locations.tolist(), (b.weights / b.total_mass).tolist()))
            total = 0.0
            for loc, w in zip(a.locations.tolist(), (a.weights / a.total_mass).tolist()):
                if w == 0:
                    continue
                if qa.get(loc, 0.0) <= 0:
                    return math.inf
                total += w * math.log(w / qa[loc])
            return total
        return math.inf
    space = BaseSpace.unit_interval()
    d1 = nu1 if isinstance(nu1, TestFunction) else TestFunction.constant(1.0)
    d2 = nu2 if isinstance(nu2, TestFunction) else TestFunction.constant(1.0)
    if d2.lower <= 0:
        return math.inf
    g = lambda s: special.xlogy(d1(s), d1(s)) - special.xlogy(d1(s), d2(s))
    return space.integrate(g, d1.breakpoints + d2.breakpoints)


def hamiltonian_gamma(mu: AtomicMeasure, theta: float, beta: float, nu0: BaseSpace) -> float:
    """theta Ent(nu0 | mu_hat) + (mu(S)/beta) phi(beta theta / mu(S))."""
    r = mu.total_mass
    return theta * entropy(nu0, normalize(mu)) + (r / beta) * phi(beta * theta / r)


def hamiltonian_dirichlet(nu: AtomicMeasure, theta: float, nu0: BaseSpace) -> float:
    return theta * entropy(nu0, nu)


def tilt_constant(alpha: float, theta: float, c: float = 1.0) -> float:
    """c^(theta/alpha) Gamma(theta+1) / Gamma(theta/alpha + 1)."""
    return math.exp((theta / alpha) * math.log(c) + special.gammaln(theta + 1)
                    - special.gammaln(theta / alpha + 1))


# --- Laplace functionals ----------------------------------------------------

def laplace_gamma(theta: float, beta: float, nu0: BaseSpace, g: TestFunction) -> float:
    """E exp(-<mu, g>) under the gamma measure: exp(-theta <nu0, log(1 + beta g)>)."""
    if not g.lower > -1.0 / beta:
        raise DomainError("gamma Laplace functional needs g > -1/beta everywhere")
    return math.exp(-theta * nu0.integrate(lambda s: np.log1p(beta * g(s)), g.breakpoints))


def laplace_stable(alpha: float, c: float, nu0: BaseSpace, g: TestFunction) -> float:
    """exp(-c <nu0, g^alpha>) for the nu0-marked stable subordinator."""
    if g.lower < 0:
        raise DomainError("stable Laplace functional needs g >= 0")
    return math.exp(-c * nu0.integrate(lambda s: g(s) ** alpha, g.breakpoints))


def _pair_mu0(mu0, g) -> float:
    """<mu0, g> for an atomic mu0 or ``(c, BaseSpace)`` meaning c * nu0."""
    if isinstance(mu0, AtomicMeasure):
        return mu0.pair(g)
    c, space = mu0
    return c * space.integrate(g)


def laplace_mbi_time_t(a: TestFunction, b: TestFunction, mu0, mu: AtomicMeasure, t: float,
                       f: TestFunction, variant: str = "corrected") -> float:
    """E_mu exp(-<Z_t, f>) for the branching diffusion with coefficients (a, b, mu0).

    ``corrected``: the second exponent is <mu, e^{-bt} f / (1 + (a/b)(1-e^{-bt}) f)>,
    the solution of the log-Laplace equation v' = -b v - a v^2, v(0) = f.
    ``literal``: the same expression without the factor f in the numerator.
    """
    if f.lower < 0:
        raise DomainError("Laplace functional needs f >= 0")
    a.require_positive()
    b.require_positive()
    if variant not in ("corrected", "literal"):
        raise ValueError(f"unknown variant {variant!r}")

    def k(s):
        bs = b(s)
        return a(s) * -np.expm1(-bs * t) / bs

    immig = _pair_mu0(mu0, lambda s: np.log1p(k(s) * f(s)) / a(s))
    num = (lambda s: np.exp(-b(s) * t) * f(s)) if variant == "corrected" else \
        (lambda s: np.exp(-b(s) * t))
    start = mu.pair(lambda s: num(s) / (1.0 + k(s) * f(s)))
    return math.exp(-immig - start)


# --- Radon-Nikodym derivatives ----------------------------------------------

def _log_int_nu0(nu0: BaseSpace, g: TestFunction) -> float:
    return nu0.expect(lambda s: np.log(g(s)), g.breakpoints)


def rn_gamma_Tf(mu, f: TestFunction, theta: float, beta: float, nu0: BaseSpace) -> LogValue:
    """d T_f(Gamma) / d Gamma at mu: exp{-[theta <nu0, log f> + <mu, (1/f - 1)/beta>]}."""
    f.require_positive()
    c = f.map(lambda v: (1.0 / v - 1.0) / beta, (1 / f.upper - 1) / beta, (1 / f.lower - 1) / beta)
    log = -theta * _log_int_nu0(nu0, f) - mu.pair(c)
    return LogValue(log, np.ones_like(log, dtype=int) if np.ndim(log) else 1)


def rn_dirichlet_Tf(nu, f: TestFunction, theta: float, nu0: BaseSpace) -> LogValue:
    """d Tbar_f(Pi) / d Pi at nu: exp{-theta[<nu0, log f> + log <nu, 1/f>]}.

    A truncated nu (mass below one) is renormalized first.
    """
    f.require_positive()
    ratio = nu.pair(f.reciprocal()) / nu.pair(TestFunction.constant(1.0))
    log = -theta * (_log_int_nu0(nu0, f) + np.log(ratio))
    return LogValue(log, np.ones_like(log, dtype=int) if np.ndim(log) else 1)


def _partition_rows(p):
    """(R, K) weights, (R,) tails, and whether the input was a single partition."""
    if isinstance(p, MassPartition):
        return p.weights[None, :], np.array([p.tail]), True
    if isinstance(p, PartitionBatch):
        return p.weights, p.tail, False
    if isinstance(p, JumpSequence):
        return p.jumps[None, :], np.array([p.tail_bound]), True
    if isinstance(p, tuple):
        return np.asarray(p[0], float), np.asarray(p[1], float), False
    w = np.asarray(p, float)
    return (w[None, :], np.zeros(1), True) if w.ndim == 1 else (w, np.zeros(w.shape[0]), False)


def _nodes_for(nu0: BaseSpace, f: TestFunction):
    pts, wts = nu0.nodes(f.breakpoints)
    fv = f(pts)
    # repeated values (step functions) merge exactly
    u, inv = np.unique(fv, return_inverse=True)
    if u.size < fv.size:
        return u, np.bincount(inv.ravel(), weights=wts)
    return fv, wts


def _log_mixture_adaptive(row, h, w, theta, quad: QuadratureSpec, extra_rate=0.0):
    """log (1/Gamma(theta)) int_0^inf u^(theta-1) e^(-u extra) prod_i sum_k w_k e^(-u p_i h_k) du."""
    row = row[row > 0]
    kappa = float(row.sum() * np.dot(w, h) + extra_rate)
    # factor out Gamma(theta) kappa^-theta so the integrand is O(1)
    ref = special.gammaln(theta) - theta * math.log(kappa)

    def g(t):
        if t <= 0.0 or t >= 1.0:
            return 0.0
        u = t / (1.0 - t) / kappa
        with np.errstate(divide="ignore"):
            lm = np.log(np.exp(-u * np.outer(row, h)) @ w).sum() - u * extra_rate
        return math.exp((theta - 1.0) * math.log(u) + lm - ref) / kappa / (1.0 - t) ** 2

    val, err = integrate.quad(g, 0.0, 1.0, epsabs=0.0, epsrel=quad.rtol,
                              limit=quad.max_subdivisions)
    if not val > 0 or err > 100 * quad.rtol * val:
        raise NumericError(f"u-integral quadrature failed: value {val:.6g}, error estimate {err:.3g}")
    return math.log(val) + ref - special.gammaln(theta), err / val


@dataclass(frozen=True)
class _GLRule:
    v: np.ndarray
    logw: np.ndarray


_GL_CACHE: dict = {}


def _genlaguerre(n: int, theta: float) -> _GLRule:
    key = (n, float(theta))
    if key not in _GL_CACHE:
        v, w = special.roots_genlaguerre(n, theta - 1.0)
        keep = w > 0
        _GL_CACHE[key] = _GLRule(v[keep], np.log(w[keep]))
    return _GL_CACHE[key]


def _log_mixture_gauss(P, h, w, theta, quad: QuadratureSpec, extra_rate=None):
    """Vectorized generalized Gauss-Laguerre version over the rows of P."""
    rule = _genlaguerre(quad.rule_size(h.max() / h.min()), theta)
    R, K = P.shape
    J, S = rule.v.size, h.size
    extra = np.zeros(R) if extra_rate is None else np.asarray(extra_rate, float)
    # a rate below every decay rate of the product keeps the remainder decreasing
    kappa = np.maximum(P.sum(axis=1) * h.min() + extra, 1e-300)
    out = np.empty(R)
    chunk = max(1, _WORK_CAP // max(1, K * J * S))
    # log sum_k w_k e^{-x h_k} = -x h_min + log sum_k w_k e^{-x (h_k - h_min)}; the sum stays >= min w
    hmin = h.min()
    dh = h - hmin
    for s in range(0, R, chunk):
        Pc, kc = P[s:s + chunk], kappa[s:s + chunk]
        used = np.nonzero(Pc.any(axis=0))[0]
        Pc = Pc[:, :used[-1] + 1] if used.size else Pc[:, :1]  # trailing zero atoms contribute nothing
        u = rule.v[None, :] / kc[:, None]
        x = Pc[:, :, None] * u[:, None, :]
        inner = np.log(np.exp(-x[..., None] * dh) @ w)
        lm = (inner.sum(axis=1) - hmin * Pc.sum(axis=1)[:, None] * u) - u * extra[s:s + chunk, None]
        out[s:s + chunk] = (special.logsumexp(rule.logw + rule.v + lm, axis=1)
                            - theta * np.log(kc) - special.gammaln(theta))
    return out


def _log_mixture(P, h, w, theta, quad, extra_rate=None):
    if quad.scheme == "gauss" and h.max() / h.min() <= quad.gauss_max_ratio:
        return _log_mixture_gauss(P, h, w, theta, quad, extra_rate), np.zeros(P.shape[0])
    extra = np.zeros(P.shape[0]) if extra_rate is None else extra_rate
    res = [_log_mixture_adaptive(row, h, w, theta, quad, e) for row, e in zip(P, extra)]
    return np.array([r[0] for r in res]), np.array([r[1] for r in res])


def _mixture_log_integral(P, tails, h, w, theta, quad: QuadratureSpec, bracket: bool):
    """Central value treats each residual as one more atom; the bracket uses its extreme factors
    exp(-u tail max h) and 1."""
    centre, err = _log_mixture(np.hstack([P, tails[:, None]]), h, w, theta, quad)
    br = None
    if bracket:
        lo, _ = _log_mixture(P, h, w, theta, quad, tails * h.max())
        hi, _ = _log_mixture(P, h, w, theta, quad)
        br = (lo, hi)
    return centre, err, br


def _wrap(log, err, br, single):
    if single:
        b = None if br is None else (float(br[0][0]), float(br[1][0]))
        return LogValue(float(log[0]), 1, float(err[0]), b)
    return LogValue(log, np.ones(log.shape, int), err, br)


def rn_pd_theta(p, f: TestFunction, theta: float, nu0: BaseSpace,
                quad: QuadratureSpec = GAUSS, bracket: bool = False) -> LogValue:
    """Density of the image of PD(theta) under the random reweighting by f.

    exp(-theta <nu0, log f>) * int_0^inf u^(theta-1)/Gamma(theta)
    prod_i E_{xi ~ nu0}[exp(-u p_i / f(xi))] du.
    """
    f.require_positive()
    P, tails, single = _partition_rows(p)
    if f.lower == f.upper:
        z = np.zeros(P.shape[0])
        return _wrap(z, z, (z, z) if bracket else None, single)
    fv, w = _nodes_for(nu0, f)
    h = 1.0 / fv
    li, err, br = _mixture_log_integral(P, tails, h, w, theta, quad, bracket)
    shift = -theta * float(np.dot(w, np.log(fv)))
    if br is not None:
        br = (br[0] + shift, br[1] + shift)
    return _wrap(li + shift, err, br, single)


def rn_pd_two_param(p, f: TestFunction, alpha: float, theta: float, nu0: BaseSpace,
                    quad: QuadratureSpec = GAUSS, bracket: bool = False) -> LogValue:
    """Density of the image of PD(alpha, theta) under the random reweighting by f.

    <nu0, f^alpha>^(-theta/alpha) (1/Gamma(theta)) int_0^inf u^(theta-1)
    prod_i E_{nu_alpha}[exp(-u p_i / f(xi))] du, nu_alpha = f^alpha nu0 / <nu0, f^alpha>.
    theta = 0 gives exactly 1.
    """
    f.require_positive()
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if theta < 0:
        raise DomainError("theta must be nonnegative")
    P, tails, single = _partition_rows(p)
    if theta == 0 or f.lower == f.upper:
        z = np.zeros(P.shape[0])
        return _wrap(z, z, (z, z) if bracket else None, single)
    fv, w = _nodes_for(nu0, f)
    fa = fv ** alpha
    A = float(np.dot(w, fa))
    li, err, br = _mixture_log_integral(P, tails, 1.0 / fv, w * fa / A, theta, quad, bracket)
    shift = -(theta / alpha) * math.log(A)
    if br is not None:
        br = (br[0] + shift, br[1] + shift)
    return _wrap(li + shift, err, br, single)


def rn_jumps_Tf(x, f: TestFunction, theta: float, beta: float, nu0: BaseSpace,
                bracket: bool = False) -> LogValue:
    """Density of the ordered jumps of T_f(Gamma) against those of Gamma.

    exp(-theta <nu0, log f>) prod_i <nu0, exp(-(1/f - 1) x_i / beta)>.  The
    residual mass enters the central value as one extra jump.
    """
    f.require_positive()
    X, tails, single = _partition_rows(x)
    fv, w = _nodes_for(nu0, f)
    c = (1.0 / fv - 1.0) / beta
    logw = np.log(w)
    shift = -theta * float(np.dot(w, np.log(fv)))

    def logprod(M):
        out = np.empty(M.shape[0])
        chunk = max(1, _WORK_CAP // max(1, M.shape[1] * c.size))
        for s in range(0, M.shape[0], chunk):
            e = -M[s:s + chunk, :, None] * c + logw
            out[s:s + chunk] = special.logsumexp(e, axis=2).sum(axis=1)
        return out

    if f.lower == f.upper:
        base = -c[0] * X.sum(axis=1)
        log = base - c[0] * tails + shift
        br = (log, log) if bracket else None
        return _wrap(log, np.zeros_like(log), br, single)
    core = logprod(X)
    central = core + logprod(tails[:, None]) + shift
    br = None
    if bracket:
        a1, a2 = core - c.max() * tails + shift, core - c.min() * tails + shift
        br = (np.minimum(a1, a2), np.maximum(a1, a2))
    return _wrap(central, np.zeros_like(central), br, single)


def lambda_functional(mu, f: TestFunction, a: TestFunction, b: TestFunction, mu0) -> np.ndarray | float:
    """Lambda(mu, f) = <mu0, f/a> - <mu, (e^f - 1) b / a>."""
    first = _pair_mu0(mu0, lambda s: f(s) / a(s))
    return first - mu.pair(lambda s: np.expm1(f(s)) * b(s) / a(s))
