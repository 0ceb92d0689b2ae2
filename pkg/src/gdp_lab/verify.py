"""Monte Carlo certification: estimators with standard errors, paired and
unpaired comparisons, pmf fits and machine-readable reports."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .densities import LogValue
from .measures import ContractError
from .rng import RngStream

Z_THRESHOLD = 3.0
REL_SE_LIMIT = 0.2
_ALPHA = 2.0 * stats.norm.sf(Z_THRESHOLD)


class ConfigurationError(ValueError):
    """A check was wired inconsistently (e.g. the identity smoke test failed)."""


def bonferroni_threshold(k: int) -> float:
    """|z| threshold keeping the family-wise false-alarm rate of k checks at that of one |z| <= 3 check."""
    return float(stats.norm.isf(_ALPHA / (2.0 * max(1, k))))


# --- estimates --------------------------------------------------------------

@dataclass(frozen=True)
class EstimateWithError:
    value: float
    se: float
    n: int
    seed: str = ""

    @classmethod
    def from_samples(cls, x, seed: str = "") -> "EstimateWithError":
        x = np.asarray(x, float)
        n = x.size
        mean = math.fsum(x) / n
        var = math.fsum((x - mean) ** 2) / (n - 1) if n > 1 else math.inf
        return cls(mean, math.sqrt(var / n), n, seed)

    @classmethod
    def exact(cls, value: float) -> "EstimateWithError":
        return cls(float(value), 0.0, 0, "exact")

    def relative_se(self, scale: float = 0.0) -> float:
        denom = max(abs(self.value), scale)
        if self.se == 0:
            return 0.0
        return self.se / denom if denom > 0 else math.inf


@dataclass
class VerificationReport:
    """One certified identity.  ``decision`` is pass/fail/inconclusive."""

    id: str
    left: float
    right: float
    se_left: float
    se_right: float
    z: float | None
    decision: str
    seed: str
    config: dict = field(default_factory=dict)
    threshold: float = Z_THRESHOLD
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean(asdict(self))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def reports_to_json(reports: Sequence[VerificationReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=1)


CSV_COLUMNS = ("id", "left", "right", "se_left", "se_right", "z", "decision", "threshold", "seed")


def reports_to_csv(reports: Sequence[VerificationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        d = r.to_dict()
        w.writerow([d[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def summarize(reports: Sequence[VerificationReport]) -> str:
    decs = [r.decision for r in reports]
    if "fail" in decs:
        return "fail"
    if "inconclusive" in decs:
        return "inconclusive"
    return "pass"


# --- replicate plumbing -----------------------------------------------------

def worker_count() -> int:
    env = os.environ.get("GDP_LAB_THREADS")
    if env:
        return max(1, int(env))
    return 1


def replicate(fn: Callable, n: int, stream: RngStream, chunk: int = 20_000, threads: int | None = None):
    """Run ``fn(generator, m)`` over chunks of the n replicates.

    Chunk i always uses substream i, so results do not depend on the number of
    worker threads.  Outputs (arrays or tuples of arrays) are concatenated in
    chunk order.
    """
    sizes = [min(chunk, n - s) for s in range(0, n, chunk)]
    threads = worker_count() if threads is None else threads
    jobs = [(stream.substream(i), m) for i, m in enumerate(sizes)]
    run = lambda job: fn(job[0].generator(), job[1])
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    if isinstance(parts[0], tuple):
        return tuple(_concat([p[k] for p in parts]) for k in range(len(parts[0])))
    return _concat(parts)


def _concat(parts):
    first = parts[0]
    if isinstance(first, np.ndarray):
        return np.concatenate(parts, axis=0)
    if hasattr(first, "concat"):
        return type(first).concat(parts)
    out = []
    for p in parts:
        out.extend(p)
    return out


# --- decisions --------------------------------------------------------------

def _decide(left: EstimateWithError, right: EstimateWithError, z: float, threshold: float,
            scale: float = 0.0) -> tuple[str, dict]:
    notes = {}
    worst = max(left.relative_se(scale), right.relative_se(scale))
    if worst > REL_SE_LIMIT:
        n = max(left.n, right.n, 1)
        notes["suggested_replicates"] = int(math.ceil(n * (worst / REL_SE_LIMIT) ** 2 * 1.1))
        return "inconclusive", notes
    return ("pass" if abs(z) <= threshold else "fail"), notes


def compare_paired(id: str, L, R, seed: str = "", config=None, threshold: float = Z_THRESHOLD,
                   scale: float = 0.0) -> VerificationReport:
    """z from the paired differences L_i - R_i."""
    L, R = np.asarray(L, float), np.asarray(R, float)
    el, er = EstimateWithError.from_samples(L, seed), EstimateWithError.from_samples(R, seed)
    d = EstimateWithError.from_samples(L - R)
    if d.se == 0:
        z = 0.0 if d.value == 0 else math.copysign(math.inf, d.value)
    else:
        z = d.value / d.se
    decision, notes = _decide(el, er, z, threshold, scale)
    notes["paired"] = True
    notes["se_difference"] = d.se
    return VerificationReport(id, el.value, er.value, el.se, er.se, z, decision, seed, config or {},
                              threshold, notes)


def compare_unpaired(id: str, left: EstimateWithError, right: EstimateWithError, seed: str = "", config=None,
                     threshold: float = Z_THRESHOLD, scale: float = 0.0, bias: float = 0.0) -> VerificationReport:
    """z = (left - right) / sqrt(se_l^2 + se_r^2), after allowing a deterministic bias budget."""
    se = math.hypot(left.se, right.se)
    gap = max(0.0, abs(left.value - right.value) - bias)
    if se == 0:
        z = 0.0 if gap == 0 else math.inf
    else:
        z = math.copysign(gap / se, left.value - right.value)
    decision, notes = _decide(left, right, z, threshold, scale)
    if bias:
        notes["bias_budget"] = bias
    return VerificationReport(id, left.value, right.value, left.se, right.se, z, decision, seed, config or {},
                              threshold, notes)


def _values(x):
    if isinstance(x, LogValue):
        return np.asarray(x.value, float)
    return np.asarray(x, float)


# --- checks -----------------------------------------------------------------

def check_change_of_measure(sampler: Callable, transform: Callable, density: Callable, functionals,
                            n: int, rng: RngStream, id: str = "change-of-measure", exact: bool = False,
                            threshold: float = Z_THRESHOLD, config=None, chunk: int = 20_000):
    """Certify E[F(T X)] = E[F(X) rho(X)] for each (name, F) in ``functionals``.

    Both sides use the same draws of X.  ``exact`` demands sample-by-sample
    equality, which is what happens when T is the identity.
    """
    def run(gen, m):
        X = sampler(gen, m)
        TX = transform(X)
        rho = _values(density(X))
        return tuple(v for name, F in functionals for v in (np.asarray(F(TX), float),
                                                              np.asarray(F(X), float) * rho))
    outs = replicate(run, n, rng, chunk)
    reports = []
    for k, (name, _) in enumerate(functionals):
        L, R = outs[2 * k], outs[2 * k + 1]
        rep = compare_paired(f"{id}/{name}", L, R, _seed(rng), config, threshold)
        if exact:
            same = bool(np.array_equal(L, R))
            rep.notes["exact_equality"] = same
            rep.decision = "pass" if same else "fail"
        reports.append(rep)
    return reports


def check_distribution_equality(sampler_a: Callable, sampler_b: Callable, probes, n: int, rng: RngStream,
                                id: str = "distribution-equality", threshold: float = Z_THRESHOLD,
                                config=None, chunk: int = 20_000):
    """Compare E[probe(A)] and E[probe(B)] for independent A and B."""
    kinds = []

    def side(sampler, tag):
        def run(gen, m):
            X = sampler(gen, m)
            kinds.append((tag, _kind(X)))
            return tuple(np.asarray(p(X), float) for _, p in probes)
        return run

    A = replicate(side(sampler_a, "a"), n, rng.substream(0), chunk)
    B = replicate(side(sampler_b, "b"), n, rng.substream(1), chunk)
    ka = {k for t, k in kinds if t == "a"}
    kb = {k for t, k in kinds if t == "b"}
    if ka != kb:
        raise ContractError(f"samplers emit different kinds: {sorted(ka)} vs {sorted(kb)}")
    out = []
    for k, (name, _) in enumerate(probes):
        out.append(compare_unpaired(f"{id}/{name}", EstimateWithError.from_samples(A[k]),
                                    EstimateWithError.from_samples(B[k]), _seed(rng), config, threshold))
    return out


def _kind(X):
    if isinstance(X, np.ndarray):
        return ("array",) + tuple(X.shape[1:])
    return (type(X).__name__,)


def _corr_z(a, b):
    a = (a - a.mean()) / a.std()
    b = (b - b.mean()) / b.std()
    r = float(np.mean(a * b))
    se = float(np.sqrt(np.mean((a * b - r) ** 2) / a.size))
    return r, se


def check_independence(sampler: Callable, statistic_a: Callable, statistic_b: Callable, n: int,
                       rng: RngStream, id: str = "independence", threshold: float = Z_THRESHOLD,
                       config=None) -> VerificationReport:
    """Correlation of (a, b) and of (a^2, b^2), each compared with zero."""
    def run(gen, m):
        X = sampler(gen, m)
        return np.asarray(statistic_a(X), float), np.asarray(statistic_b(X), float)
    a, b = replicate(run, n, rng)
    r1, s1 = _corr_z(a, b)
    r2, s2 = _corr_z(a * a, b * b)
    z1, z2 = r1 / s1, r2 / s2
    z = z1 if abs(z1) >= abs(z2) else z2
    left = EstimateWithError(r1, s1, n)
    decision, notes = _decide(left, EstimateWithError(r2, s2, n), z, threshold, scale=1.0)
    notes.update({"corr": r1, "corr_se": s1, "corr_sq": r2, "corr_sq_se": s2})
    return VerificationReport(id, r1, 0.0, s1, 0.0, z, decision, _seed(rng), config or {}, threshold, notes)


def check_detailed_balance(stationary_sampler: Callable, transition_sampler: Callable, functional_pairs,
                           n: int, rng: RngStream, id: str = "detailed-balance",
                           threshold: float = Z_THRESHOLD, config=None, chunk: int = 20_000):
    """E[F(X0) G(X1)] against E[G(X0) F(X1)] with X0 stationary and X1 one transition later."""
    def run(gen, m):
        X0 = stationary_sampler(gen, m)
        X1 = transition_sampler(X0, gen)
        out = []
        for name, F, G in functional_pairs:
            out += [np.asarray(F(X0), float) * np.asarray(G(X1), float),
                    np.asarray(G(X0), float) * np.asarray(F(X1), float)]
        return tuple(out)
    outs = replicate(run, n, rng, chunk)
    return [compare_paired(f"{id}/{name}", outs[2 * k], outs[2 * k + 1], _seed(rng), config, threshold)
            for k, (name, _, _) in enumerate(functional_pairs)]


def check_pmf_fit(samples, pmf, support_cap: int | None = None, id: str = "pmf-fit", seed: str = "",
                  config=None, min_expected: float = 5.0, tv_limit: float = 0.01,
                  p_limit: float = 0.01) -> VerificationReport:
    """Pooled chi-square and total variation of integer samples against a pmf.

    ``pmf`` is an array over 0..K or a callable on integer arrays.  The cap
    defaults to the smallest K with tail mass below 1e-6; mass beyond it is pooled.
    """
    x = np.asarray(samples, dtype=np.int64)
    n = x.size
    if callable(pmf):
        top = int(max(x.max(), 10)) * 2 + 10
        probs = np.asarray(pmf(np.arange(top)), float)
    else:
        probs = np.asarray(pmf, float)
    if support_cap is None:
        tail = 1.0 - np.cumsum(probs)
        below = np.nonzero(tail < 1e-6)[0]
        support_cap = int(below[0]) + 1 if below.size else probs.size
    cap = max(1, support_cap)
    p = np.r_[probs[:cap], max(0.0, 1.0 - probs[:cap].sum())]
    obs = np.bincount(np.minimum(x, cap), minlength=cap + 1).astype(float)
    full_p = np.r_[probs, 0.0]
    full_obs = np.bincount(x, minlength=full_p.size).astype(float)
    if full_obs.size > full_p.size:
        full_p = np.r_[full_p, np.zeros(full_obs.size - full_p.size)]
    else:
        full_obs = np.r_[full_obs, np.zeros(full_p.size - full_obs.size)]
    tv = 0.5 * float(np.abs(full_obs / n - full_p).sum())
    # pool neighbouring bins until every expected count reaches min_expected
    e_bins, o_bins, ce, co = [], [], 0.0, 0.0
    for e, o in zip(n * p, obs):
        ce += e
        co += o
        if ce >= min_expected:
            e_bins.append(ce)
            o_bins.append(co)
            ce = co = 0.0
    if ce > 0 or co > 0:
        if e_bins:
            e_bins[-1] += ce
            o_bins[-1] += co
        else:
            e_bins.append(ce)
            o_bins.append(co)
    e_bins, o_bins = np.array(e_bins), np.array(o_bins)
    notes = {"tv": tv, "bins": int(e_bins.size), "support_cap": cap, "replicates": n}
    if e_bins.size < 2:
        return VerificationReport(id, tv, 0.0, 0.0, 0.0, None, "inconclusive", seed, config or {},
                                  Z_THRESHOLD, notes | {"reason": "too few bins"})
    chi2 = float(np.sum((o_bins - e_bins) ** 2 / e_bins))
    pval = float(stats.chi2.sf(chi2, e_bins.size - 1))
    notes.update({"chi2": chi2, "p_value": pval, "tv_limit": tv_limit, "p_limit": p_limit})
    decision = "pass" if (pval > p_limit and tv < tv_limit) else "fail"
    return VerificationReport(id, tv, 0.0, 0.0, 0.0, float(stats.norm.isf(max(pval, 1e-300) / 2)), decision,
                              seed, config or {}, Z_THRESHOLD, notes)


def check_against_value(id: str, samples, target: float, seed: str = "", config=None,
                        threshold: float = Z_THRESHOLD, scale: float = 0.0, bias: float = 0.0):
    """Sample mean against an exactly known value."""
    return compare_unpaired(id, EstimateWithError.from_samples(samples, seed), EstimateWithError.exact(target),
                            seed, config, threshold, scale, bias)


def richardson(deltas, estimates, ses):
    """Second-order extrapolation to delta = 0 from three step sizes in ratio 2.

    Returns (value, se, extrapolation error), the last being the gap to the
    first-order extrapolation from the two smallest steps.
    """
    d = np.asarray(deltas, float)
    order = np.argsort(-d)
    D1, D2, D3 = np.asarray(estimates, float)[order]
    s1, s2, s3 = np.asarray(ses, float)[order]
    if not np.allclose(d[order][:-1] / d[order][1:], 2.0):
        raise ValueError("Richardson steps must halve")
    value = (8 * D3 - 6 * D2 + D1) / 3
    se = math.sqrt(64 * s3 ** 2 + 36 * s2 ** 2 + s1 ** 2) / 3
    first = 2 * D3 - D2
    return value, se, abs(value - first)


def check_generator_consistency(id: str, F, x, generator_value: float, transition: Callable, deltas,
                                n: int, rng: RngStream, mean_at: Callable | None = None, threshold: float = Z_THRESHOLD,
                                config=None) -> VerificationReport:
    """(E[F(X_delta)] - F(x)) / delta extrapolated to delta = 0 against the generator.

    ``transition(delta, gen, m)`` draws X_delta from x.  With ``mean_at(delta)``
    (the exact mean of X_delta) the linear part of F is used as a control
    variate, which removes the O(1/sqrt(delta)) noise of the plain difference.
    """
    x = np.asarray(x, float)
    F0 = float(F(x))
    grad = F.first_variation(x)
    ests, ses = [], []
    for k, delta in enumerate(deltas):
        def run(gen, m, delta=delta):
            X = transition(delta, gen, m)
            v = np.asarray(F(X), float) - F0
            if mean_at is not None:
                v = v - (X - mean_at(delta)) @ grad
            return v / delta
        e = EstimateWithError.from_samples(replicate(run, n, rng.substream(k)))
        ests.append(e.value)
        ses.append(e.se)
    value, se, ext = richardson(deltas, ests, ses)
    rep = compare_unpaired(id, EstimateWithError(value, se, n), EstimateWithError.exact(generator_value),
                           _seed(rng), config, threshold, bias=ext)
    rep.notes.update({"deltas": list(deltas), "estimates": ests, "ses": ses, "extrapolation_error": ext})
    return rep


def _seed(rng: RngStream) -> str:
    return f"{rng.seed}:{rng.stream_id}:{'.'.join(map(str, rng.path))}"
