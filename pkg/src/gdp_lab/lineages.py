"""Lines of descent: the factor C(lambda, t), the inhomogeneous pure death chain,
the coalescent pmf d_n(t), the embedded Kingman chain and the random time change
that carries one onto the other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate, optimize, special, stats

from .rng import RngStream, as_generator
from .samplers import NumericError, ParameterError


def c_factor(lam, t):
    """C(lambda, t) = (e^{lambda t / 2} - 1) / lambda, t/2 at lambda = 0."""
    lam = np.asarray(lam, float)
    t = np.asarray(t, float)
    x = lam * t
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, lam)
    out = np.where(small, 0.5 * t * (1.0 + x / 4.0 + x * x / 24.0), np.expm1(x / 2.0) / safe)
    return float(out) if out.ndim == 0 else out


def c_limit(lam: float) -> float:
    """C(lambda, infinity): -1/lambda for lambda < 0, otherwise infinite."""
    return -1.0 / lam if lam < 0 else math.inf


def c_inverse(lam: float, c):
    """The time t with C(lambda, t) = c; infinite once c reaches C(lambda, infinity)."""
    c = np.asarray(c, float)
    if lam == 0:
        out = 2.0 * c
    else:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            arg = lam * c
            series = 2.0 * c * (1.0 - arg / 2.0 + arg * arg / 3.0)
            out = np.where(np.abs(arg) < 1e-6, series,
                           np.where(arg > -1.0, 2.0 / lam * np.log1p(np.maximum(arg, -1.0)), np.inf))
    return float(out) if out.ndim == 0 else out


def death_marginal_pmf(a: float, lam: float, t: float, n):
    """P(N_a(t) = n): Poisson with mean a / C(lambda, t)."""
    if a <= 0 or t <= 0:
        raise ParameterError("a and t must be positive")
    return stats.poisson.pmf(n, a / c_factor(lam, t))


@dataclass(frozen=True)
class CoalescentParams:
    theta: float

    def __post_init__(self):
        if self.theta < 0:
            raise ParameterError("theta must be nonnegative")

    def rate(self, n):
        """lambda_n = n (n + theta - 1) / 2."""
        n = np.asarray(n, float)
        out = n * (n + self.theta - 1.0) / 2.0
        return float(out) if out.ndim == 0 else out


# --- coalescent pmf ---------------------------------------------------------

@dataclass(frozen=True)
class CountPmf:
    """pmf on {0, ..., len(probs)-1} plus the mass left beyond the support cap.

    ``method`` is ``series`` for the alternating series or ``monte-carlo`` when
    the series cannot be resolved and the chain was simulated instead.
    """

    theta: float
    t: float
    probs: np.ndarray
    method: str = "series"
    digits: int = 0
    normalization_error: float = 0.0
    tail: float = 0.0

    def __call__(self, n):
        n = np.asarray(n)
        inside = (n >= 0) & (n < self.probs.size)
        out = np.where(inside, self.probs[np.clip(n, 0, self.probs.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out


# series longer than this are replaced by simulation (t of order 1e-3)
_MAX_TERMS = 2500
_MC_FALLBACK_PATHS = 200_000


def _log_term_magnitudes(theta: float, t: float, m: int) -> np.ndarray:
    """log |term(n, m)| for n = 0..m, term = (2m-1+theta)/(n!(m-n)!) (n+theta)_(m-1) e^{-lambda_m t}."""
    n = np.arange(m + 1, dtype=float)
    rf = special.gammaln(n + theta + m - 1.0) - special.gammaln(n + theta)
    return (math.log(2 * m - 1.0 + theta) - special.gammaln(n + 1.0) - special.gammaln(m - n + 1.0)
            + rf - m * (m + theta - 1.0) / 2.0 * t)


def _series_extent(theta: float, t: float):
    """(number of terms, log of the largest term); terms beyond are below e^-92 and falling."""
    peak, m, last = 0.0, 1, -np.inf
    while True:
        top = float(_log_term_magnitudes(theta, t, m).max())
        peak = max(peak, top)
        if top < -92.0 and top < last:
            return m, peak
        last = top
        m += 1
        if m > 100_000:
            raise NumericError("coalescent series does not converge")


@lru_cache(maxsize=256)
def _tavare_series(theta: float, t: float, tol: float):
    M, peak = _series_extent(theta, t)
    digits = int(max(0.0, peak) / math.log(10)) + 30
    if M > _MAX_TERMS:
        return None
    with mpmath.workdps(digits):
        th, tt = mpmath.mpf(theta), mpmath.mpf(t)
        # term(n, m) = (2m-1+theta) e^{-lambda_m t} Gamma(n+m+theta-1) / (n! (m-n)! Gamma(n+theta))
        E = [(2 * m - 1 + th) * mpmath.exp(-(m * (m + th - 1) / 2) * tt) for m in range(M + 1)]
        inv_fact = [mpmath.mpf(1)]
        for k in range(1, M + 1):
            inv_fact.append(inv_fact[-1] / k)
        # G[k] = Gamma(theta + k - 1) / Gamma(theta) for k >= 1
        G = [None, mpmath.mpf(1)]
        for k in range(2, 2 * M + 1):
            G.append(G[-1] * (th + k - 2))
        out = []
        for n in range(0, M + 1):
            if n == 0:
                s = 1 - mpmath.fsum((-1) ** (m - 1) * E[m] * inv_fact[m] * G[m]
                                    for m in range(1, M + 1))
            else:
                w = inv_fact[n] / G[n + 1]
                s = w * mpmath.fsum(E[m] * G[n + m] * inv_fact[m - n] * (1 - 2 * ((m - n) & 1))
                                    for m in range(n, M + 1))
            out.append(float(s))
            if abs(out[-1]) < 1e-18 and sum(out) > 1.0 - 1e-13:
                break
    return np.array(out), digits


def tavare_distribution(theta: float, t: float, tol: float = 1e-8, rng=None) -> CountPmf:
    """The full pmf of the number of lines of descent at time t.

    The alternating series is summed at a working precision chosen from the
    largest term magnitude, so that no digits are lost to cancellation.  When
    the series needs more than ``_MAX_TERMS`` terms (t of order 1e-3) the chain is
    simulated instead and the result is flagged ``monte-carlo``.
    """
    if theta <= 0 or t <= 0:
        raise ParameterError("theta and t must be positive")
    res = _tavare_series(float(theta), float(t), tol)
    if res is None:
        seed = (round(theta * 1e6) * 1_000_003 + round(t * 1e9)) % 2**63
        gen = as_generator(rng if rng is not None else RngStream(seed, 7))
        draws = simulate_kingman(theta, t, rng=gen, size=_MC_FALLBACK_PATHS)
        probs = np.bincount(draws) / draws.size
        return CountPmf(theta, t, probs, "monte-carlo", 0, 0.0)
    probs, digits = res
    if np.any(probs < -tol) or np.any(probs > 1 + tol):
        raise NumericError(f"coalescent pmf left [0, 1] at {digits} digits")
    err = abs(probs.sum() - 1.0)
    if err > tol:
        raise NumericError(f"coalescent pmf normalization off by {err:.3g} (bound {tol})")
    return CountPmf(theta, t, np.clip(probs, 0.0, 1.0), "series", digits, err)


def tavare_pmf(theta: float, t: float, n, tol: float = 1e-8):
    """d_n(t), the probability of n lines of descent at time t."""
    return tavare_distribution(theta, t, tol)(n)


# --- Kingman's embedded chain -----------------------------------------------

def kingman_start(t: float, theta: float) -> int:
    """Finite start count standing in for the entrance from infinity."""
    return int(min(4096, max(256, math.ceil(40.0 / t))))


def simulate_kingman(theta: float, t: float, start=math.inf, rng=None, size: int | None = None):
    """Count of the pure death chain with rates lambda_n at time t.

    ``start = inf`` begins at ``kingman_start(t)`` lines, after a deterministic
    delay equal to the expected time the chain needs to come down from infinity
    to that level (the remaining holding-time variance is O(K^-3)).
    """
    if theta <= 0:
        raise ParameterError("theta must be positive")
    gen = as_generator(rng)
    R = 1 if size is None else int(size)
    if math.isinf(start):
        K = kingman_start(t, theta)
        # sum_{n>K} 2/(n(n+theta-1)) in closed form via digamma
        if theta == 1:
            offset = 2.0 * float(special.polygamma(1, K + 1))
        else:
            offset = 2.0 / (theta - 1.0) * float(special.digamma(K + theta) - special.digamma(K + 1))
    else:
        K, offset = int(start), 0.0
    clock = np.full(R, offset)
    state = np.full(R, -1, dtype=np.int64)
    for n in range(K, 0, -1):
        live = state < 0
        if not live.any():
            break
        rate = n * (n + theta - 1.0) / 2.0
        step = gen.exponential(1.0 / rate, R)
        new = clock + step
        hit = live & (clock <= t) & (new > t)
        state[hit] = n
        clock = new
    state[state < 0] = 0
    return int(state[0]) if size is None else state


# --- the death chain ----------------------------------------------------------

@dataclass(frozen=True)
class DeathPath:
    """A path of N_a on [t0, horizon]: counts after each event."""

    t0: float
    n0: int
    times: np.ndarray
    counts: np.ndarray
    a: float
    lam: float
    horizon: float

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must increase strictly")
        if self.counts.size and np.any(np.diff(np.r_[self.n0, self.counts]) != -1):
            raise ValueError("counts must fall by exactly one at each event")

    def count_at(self, s):
        s = np.asarray(s, float)
        k = np.searchsorted(self.times, s, side="right")
        out = np.where(k == 0, self.n0, np.r_[self.n0, self.counts][k])
        return int(out) if out.ndim == 0 else out


def _next_deaths(c_now: float, n: int, lam: float, u: float) -> float:
    """C(lambda, T) for the next death among n survivors observed at C(lambda, s) = c_now."""
    return min(c_now * u ** (-1.0 / n), c_limit(lam))


def simulate_death_path(a: float, lam: float, t0: float, horizon: float, rng) -> DeathPath:
    """Exact path: N(t0) ~ Poisson(a / C(lambda, t0)), then successive deaths by inversion.

    Each individual alive at s survives to u with probability C(lambda, s)/C(lambda, u),
    so the first of n deaths solves C(lambda, T) = C(lambda, s) U^{-1/n}.
    """
    if a <= 0:
        raise ParameterError("a must be positive")
    if t0 <= 0 or horizon <= t0:
        raise ParameterError("need 0 < t0 < horizon")
    gen = as_generator(rng)
    n = int(gen.poisson(a / c_factor(lam, t0)))
    n0, c = n, c_factor(lam, t0)
    times, counts = [], []
    c_h, cinf = c_factor(lam, horizon), c_limit(lam)
    while n > 0:
        c = _next_deaths(c, n, lam, gen.random())
        if c >= cinf or c > c_h:
            break
        times.append(float(c_inverse(lam, c)))
        n -= 1
        counts.append(n)
    return DeathPath(t0, n0, np.array(times), np.array(counts, dtype=np.int64), a, lam, horizon)


def refine(path: DeathPath, t0_new: float, rng) -> DeathPath:
    """Extend a path back to t0_new < t0 without changing it on [t0, horizon].

    Deaths form a Poisson process whose intensity, in the variable 1/C(lambda, s),
    is a times Lebesgue, so the extra deaths in (t0_new, t0] are Poisson with mean
    a (1/C(t0_new) - 1/C(t0)) and uniform in that variable.
    """
    if not 0 < t0_new < path.t0:
        raise ParameterError("refinement needs 0 < t0_new < t0")
    gen = as_generator(rng)
    y_hi, y_lo = 1.0 / c_factor(path.lam, t0_new), 1.0 / c_factor(path.lam, path.t0)
    k = int(gen.poisson(path.a * (y_hi - y_lo)))
    ys = np.sort(gen.uniform(y_lo, y_hi, k))[::-1]
    extra = np.sort(c_inverse(path.lam, 1.0 / ys)) if k else np.zeros(0)
    n0 = path.n0 + k
    counts = np.r_[n0 - 1 - np.arange(k), path.counts].astype(np.int64)
    return DeathPath(t0_new, n0, np.r_[extra, path.times], counts, path.a, path.lam, path.horizon)


def default_t0(a: float, lam: float, mean_count: float = 256.0) -> float:
    """The start time at which N(t0) has mean ``mean_count``."""
    return float(c_inverse(lam, a / mean_count))


def _mean_field_clock(a: float, lam: float, theta: float, upto: float) -> float:
    g = lambda u: 1.0 / ((a / c_factor(lam, u) + theta - 1.0) * c_factor(-lam, u))
    val, _ = integrate.quad(g, 0.0, upto, epsabs=1e-14, epsrel=1e-11, limit=200)
    return val


class ClockExhausted(NumericError):
    """The additive functional stays below the target on the whole path."""


@dataclass(frozen=True)
class TimeChange:
    """tau_t with the count N(tau_t); ``bound`` bounds the error in tau_t
    from replacing N by its mean on (0, t0]."""

    tau: float
    count: int
    early: float
    clock_bound: float
    bound: float


def time_change_tau(path: DeathPath, theta: float, t: float) -> TimeChange:
    """Solve t = int_0^tau du / ((N(u) v 1 + theta - 1) C(-lambda, u)) along a path.

    Between deaths the integral is 2 log C(lambda, u) / (n v 1 + theta - 1) in
    closed form; (0, t0] uses the mean-field integrand with N replaced by
    a / C(lambda, u).
    """
    if theta <= 0:
        raise ParameterError("theta must be positive")
    lam = path.lam
    early = _mean_field_clock(path.a, lam, theta, path.t0)
    if t == 0:
        return TimeChange(0.0, path.n0, early, early, 0.0)
    if t <= early:
        g = lambda s: _mean_field_clock(path.a, lam, theta, s) - t
        tau = optimize.brentq(g, 1e-300, path.t0, xtol=1e-15, rtol=1e-13)
        n = int(round(path.a / c_factor(lam, tau)))
        return TimeChange(tau, n, early, early, early * (n + theta - 1) * c_factor(-lam, tau))
    clock, s, n = early, path.t0, path.n0
    bounds = list(path.times) + [path.horizon]
    for k, end in enumerate(bounds):
        d = max(n, 1) + theta - 1.0
        seg = 2.0 * math.log(c_factor(lam, end) / c_factor(lam, s)) / d
        if clock + seg >= t:
            c_tau = c_factor(lam, s) * math.exp((t - clock) * d / 2.0)
            tau = float(c_inverse(lam, c_tau))
            return TimeChange(tau, n, early, early, early * d * c_factor(-lam, tau))
        clock += seg
        s = end
        if k < len(path.times):
            n = int(path.counts[k])
    raise ClockExhausted(f"clock reached only {clock:.6g} < {t} by the horizon {path.horizon}")


def time_changed_counts(a: float, lam: float, theta: float, t: float, size: int, rng,
                        t0: float | None = None):
    """N(tau_t) for ``size`` independent paths, simulated jointly.

    Returns ``(counts, exhausted)``.  For lambda < 0 each path has a finite total
    clock; paths whose clock never reaches t are flagged and report the final
    count.
    """
    if a <= 0 or theta <= 0 or t <= 0:
        raise ParameterError("a, theta and t must be positive")
    gen = as_generator(rng)
    t0 = default_t0(a, lam) if t0 is None else t0
    early = _mean_field_clock(a, lam, theta, t0)
    if early >= t:
        raise ParameterError("t0 too large: the early segment already exceeds t")
    cinf = c_limit(lam)
    n = gen.poisson(a / c_factor(lam, t0), size).astype(np.int64)
    c = np.full(size, c_factor(lam, t0))
    clock = np.full(size, early)
    out = np.full(size, -1, dtype=np.int64)
    exhausted = np.zeros(size, bool)
    active = np.arange(size)
    while active.size:
        nn = n[active]
        u = gen.random(active.size)
        with np.errstate(divide="ignore"):
            cnext = np.where(nn > 0, c[active] * u ** (-1.0 / np.maximum(nn, 1)), cinf)
        cnext = np.minimum(cnext, cinf)
        d = np.maximum(nn, 1) + theta - 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            seg = 2.0 * np.log(cnext / c[active]) / d
        done = clock[active] + seg >= t
        never = ~done & (cnext >= cinf)
        out[active[done | never]] = nn[done | never]
        exhausted[active[never]] = True
        go = ~done & ~never
        j = active[go]
        clock[j] += seg[go]
        c[j] = cnext[go]
        n[j] -= 1
        active = j
    return out, exhausted


def death_counts_at(a: float, lam: float, t: float, size: int, rng, t0: float | None = None):
    """N(t) for ``size`` paths, obtained by running the chain forward from t0.

    Equal in law to Poisson(a / C(lambda, t)); the path route is what the
    fixed-time identities use.
    """
    gen = as_generator(rng)
    t0 = min(default_t0(a, lam), t / 2) if t0 is None else t0
    n = gen.poisson(a / c_factor(lam, t0), size).astype(np.int64)
    c = np.full(size, c_factor(lam, t0))
    c_t = c_factor(lam, t)
    active = np.nonzero(n > 0)[0]
    while active.size:
        u = gen.random(active.size)
        cnext = c[active] * u ** (-1.0 / n[active])
        dies = cnext <= c_t
        j = active[dies]
        c[j] = cnext[dies]
        n[j] -= 1
        active = j[n[j] > 0]
    return n
