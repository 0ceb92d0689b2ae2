"""Named verification suites.

A suite bundles the checks for one family of identities.  ``SUITES[name].run``
returns a list of :class:`VerificationReport`; the |z| threshold of the
statistical reports is Bonferroni-corrected over the suite and chi-square or
KS p-values are compared with 0.01 divided by their count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from . import densities as dens
from . import dynamics as dyn
from . import ldp
from . import lineages as lin
from . import samplers as smp
from .measures import AtomicMeasure, BaseSpace, MeasureBatch, TestFunction, scale_by_function, to_partition
from .rng import RngStream
from .verify import (ConfigurationError, EstimateWithError, VerificationReport, Z_THRESHOLD, _seed,
                     bonferroni_threshold, check_against_value, check_change_of_measure,
                     check_detailed_balance, check_distribution_equality, check_generator_consistency,
                     check_independence, check_pmf_fit, compare_paired, compare_unpaired, replicate)

P_LIMIT = 0.01
UNIT = BaseSpace.unit_interval()


@dataclass
class Context:
    seed: int
    params: dict
    replicates: int | None = None

    def n(self, default: int) -> int:
        return int(self.replicates) if self.replicates else int(default)

    def p(self, key):
        return self.params[key]

    def stream(self, *path) -> RngStream:
        return RngStream(self.seed, 0, tuple(path))

    def design(self, k: int) -> np.random.Generator:
        """Generator for the random test functions of a suite (separate from the replicates)."""
        return RngStream(self.seed, 1, (k,)).generator()

    @property
    def config(self) -> dict:
        return dict(self.params, replicates=self.replicates)


@dataclass(frozen=True)
class Suite:
    name: str
    summary: str
    defaults: dict
    runner: Callable
    criterion: int | None = None

    def run(self, seed: int = 0, replicates: int | None = None, params: dict | None = None):
        merged = dict(self.defaults)
        for k, v in (params or {}).items():
            if k not in merged:
                raise ConfigurationError(f"params.{k}: suite {self.name!r} has no parameter {k!r}")
            merged[k] = v
        return finalize(self.runner(Context(int(seed), merged, replicates)))


def _rule(r: VerificationReport) -> str:
    if "rule" in r.notes:
        return r.notes["rule"]
    if "exact_equality" in r.notes:
        return "exact"
    if "p_value" in r.notes:
        return "p"
    return "z"


def finalize(reports):
    """Apply the suite-level thresholds (see module docstring)."""
    zs = [r for r in reports if _rule(r) == "z" and r.z is not None]
    ps = [r for r in reports if _rule(r) == "p"]
    thr = bonferroni_threshold(len(zs))
    plim = P_LIMIT / max(1, len(ps))
    for r in zs:
        r.threshold = thr
        if r.decision != "inconclusive":
            r.decision = "pass" if abs(r.z) <= thr else "fail"
    for r in ps:
        r.notes["p_limit"] = plim
        if r.decision != "inconclusive":
            ok = r.notes["p_value"] > plim and r.notes.get("tv", 0.0) < r.notes.get("tv_limit", math.inf)
            r.decision = "pass" if ok else "fail"
    return reports


# --- report helpers ---------------------------------------------------------

def tolerance_report(id: str, left: float, right: float, tol: float, seed: str = "", config=None,
                     relative: bool = False, notes=None) -> VerificationReport:
    """Deterministic comparison |left - right| <= tol (relative to |right| if asked)."""
    left, right = float(left), float(right)
    if left == right:
        gap = 0.0
    else:
        gap = abs(left - right)
        if relative:
            gap /= max(abs(right), 1e-300)
    ok = bool(gap <= tol)
    return VerificationReport(id, left, right, 0.0, 0.0, None, "pass" if ok else "fail", seed, config or {},
                              tol, {"rule": "tolerance", "gap": gap, "relative": relative} | (notes or {}))


def ks_report(id: str, a, b, seed: str = "", config=None) -> VerificationReport:
    """KS test of sample ``a`` against sample ``b`` or a cdf callable."""
    a = np.asarray(a, float)
    res = stats.kstest(a, b) if callable(b) else stats.ks_2samp(a, np.asarray(b, float))
    p = float(res.pvalue)
    return VerificationReport(id, float(res.statistic), 0.0, 0.0, 0.0, float(stats.norm.isf(max(p, 1e-300) / 2)),
                              "pass" if p > P_LIMIT else "fail", seed, config or {}, Z_THRESHOLD,
                              {"rule": "p", "p_value": p, "replicates": int(a.size)})


def _fn(values) -> TestFunction:
    return TestFunction.on_points(np.asarray(values, float))


def _step(values) -> TestFunction:
    """Step function on [0,1) with equal-width pieces."""
    v = np.asarray(values, float)
    return TestFunction.step(np.linspace(0.0, 1.0, v.size + 1), v)


def _random_step(gen, lo, hi, pieces=4) -> TestFunction:
    inner = np.sort(gen.uniform(0.05, 0.95, pieces - 1))
    return TestFunction.step(np.r_[0.0, inner, 1.0], gen.uniform(lo, hi, pieces))


def _laplace(X, g):
    return np.exp(-(X @ g))


# --- gamma and Dirichlet measures ------------------------------------------

def _gamma_laplace(ctx):
    n, beta = ctx.n(100_000), float(ctx.p("beta"))
    gen = ctx.design(0)
    gs = [_random_step(gen, 0.0, 2.0) for _ in range(int(ctx.p("functions")))]
    out = []
    for i, th in enumerate(ctx.p("theta")):
        def run(g_, m, th=float(th)):
            X = smp.sample_gamma_measure(th, UNIT, beta, rng=g_, size=m)
            return tuple(np.exp(-X.pair(g)) for g in gs)
        st = ctx.stream(i)
        cols = replicate(run, n, st)
        for k, g in enumerate(gs):
            out.append(check_against_value(f"gamma-laplace/theta={th:g}/g{k}", cols[k],
                                           dens.laplace_gamma(float(th), beta, UNIT, g), _seed(st), ctx.config))
    return out


def _gamma_dirichlet(ctx):
    th, beta, n = float(ctx.p("theta")), float(ctx.p("beta")), ctx.n(100_000)
    sp = BaseSpace.finite(ctx.p("nu0"))
    gv = ctx.design(0).uniform(-1.0, 1.0, sp.size)
    coords = lambda g_, m: smp.sample_gamma_measure(th, sp, beta, rng=g_, size=m, method="coordinates").weights
    cfg = ctx.config
    out = [
        check_independence(coords, lambda X: X.sum(1), lambda X: (X / X.sum(1, keepdims=True)) @ gv, n,
                           ctx.stream(0), "gamma-dirichlet/mass-vs-direction", config=cfg),
        check_independence(coords, lambda X: X.sum(1), lambda X: X[:, 0] / X.sum(1), n, ctx.stream(1),
                           "gamma-dirichlet/mass-vs-beta-coordinate", config=cfg),
    ]
    st = ctx.stream(2)
    mass = replicate(lambda g_, m: coords(g_, m).sum(1), n, st)
    out.append(check_against_value("gamma-dirichlet/mass-mean", mass, th * beta, _seed(st), cfg))
    out.append(check_against_value("gamma-dirichlet/mass-second-moment", mass ** 2, th * (th + 1) * beta ** 2,
                                   _seed(st), cfg))
    normalized = lambda g_, m: (lambda X: X / X.sum(1, keepdims=True))(coords(g_, m))
    direct = lambda g_, m: smp.sample_dirichlet_vector(th * sp.probs, g_, size=m)
    probes = [("mean", lambda X: X @ gv), ("second-moment", lambda X: (X @ gv) ** 2),
              ("cross", lambda X: X[:, 0] * X[:, 1])]
    out += check_distribution_equality(normalized, direct, probes, n, ctx.stream(3),
                                       "gamma-dirichlet/normalized-law", config=cfg)
    decomp = lambda g_, m: smp.sample_gamma_measure(th, sp, beta, rng=g_, size=m).dense()
    gp = np.abs(gv)
    out += check_distribution_equality(decomp, coords, [("mass", lambda X: X.sum(1)),
                                                        ("laplace", lambda X: _laplace(X, gp))],
                                       n, ctx.stream(4), "gamma-dirichlet/two-routes", config=cfg)
    return out


def _algebraic(ctx):
    n, cfg = ctx.n(100_000), ctx.config
    t1, t2 = float(ctx.p("theta1")), float(ctx.p("theta2"))
    n1, n2 = np.asarray(ctx.p("nu1"), float), np.asarray(ctx.p("nu2"), float)
    s1, s2 = BaseSpace.finite(n1), BaseSpace.finite(n2)
    mix = BaseSpace.finite((t1 * n1 + t2 * n2) / (t1 + t2))
    gen = ctx.design(0)
    gs = [gen.uniform(0.0, 1.5, 3) for _ in range(4)]
    laps = [(f"laplace{k}", lambda X, g=g: _laplace(X, g)) for k, g in enumerate(gs)]
    out = []
    summed = lambda g_, m: (smp.sample_gamma_measure(t1, s1, rng=g_, size=m).dense()
                            + smp.sample_gamma_measure(t2, s2, rng=g_, size=m).dense())
    merged = lambda g_, m: smp.sample_gamma_measure(t1 + t2, mix, rng=g_, size=m, method="coordinates").weights
    out += check_distribution_equality(summed, merged, laps + [("mass", lambda X: X.sum(1))], n,
                                       ctx.stream(0), "algebraic/additive", config=cfg)

    def mixture(g_, m):
        D = smp.sample_dirichlet_vector([t1, t2], g_, size=m)
        A = smp.sample_dirichlet_process(t1, s1, rng=g_, size=m).dense()
        B = smp.sample_dirichlet_process(t2, s2, rng=g_, size=m).dense()
        return D[:, :1] * A + D[:, 1:] * B
    direct = lambda g_, m: smp.sample_dirichlet_vector((t1 + t2) * mix.probs, g_, size=m)
    h = gs[0] - gs[0].mean()
    probes = [("mean", lambda X: X @ h), ("second-moment", lambda X: (X @ h) ** 2)] + laps[1:3]
    out += check_distribution_equality(mixture, direct, probes, n, ctx.stream(1), "algebraic/mixing",
                                       config=cfg)

    # self-similarity: restriction to A = {0, 1, 2} of a four-point space
    th = float(ctx.p("theta"))
    nu0 = np.asarray(ctx.p("nu0_restriction"), float)
    sp4 = BaseSpace.finite(nu0)
    inA = np.array([1.0, 1.0, 1.0, 0.0])
    mA = float(nu0 @ inA)
    cond = BaseSpace.finite(nu0 * inA / mA)

    def restricted(g_, m):
        X = smp.sample_dirichlet_process(th, sp4, rng=g_, size=m).dense() * inA
        return X / X.sum(1, keepdims=True)
    direct4 = lambda g_, m: smp.sample_dirichlet_process(th * mA, cond, rng=g_, size=m).dense()
    g4 = np.r_[gs[1], 0.0]
    out += check_distribution_equality(restricted, direct4,
                                       [("mean", lambda X: X @ g4), ("second-moment", lambda X: (X @ g4) ** 2),
                                        ("cross", lambda X: X[:, 0] * X[:, 2])],
                                       n, ctx.stream(2), "algebraic/self-similarity", config=cfg)
    st = ctx.stream(3)
    PA = replicate(lambda g_, m: smp.sample_dirichlet_process(th, sp4, rng=g_, size=m).dense() @ inA, n, st)
    out.append(check_against_value("algebraic/self-similarity/mass-of-A", PA, mA, _seed(st), cfg))
    out.append(check_against_value("algebraic/self-similarity/mass-of-A-second-moment", PA ** 2,
                                   mA * (th * mA + 1) / (th + 1), _seed(st), cfg))
    return out


# --- quasi-invariance -------------------------------------------------------

def _quasi(ctx, tag, sampler, transform, density, functionals, fs, default_n, identity):
    n, out = ctx.n(default_n), []
    smoke_needed = identity is not None
    for i, f in enumerate(fs):
        out += check_change_of_measure(sampler, lambda X, f=f: transform(X, f), lambda X, f=f: density(X, f),
                                       functionals, n, ctx.stream(i), f"{tag}/f{i}", config=ctx.config)
    if not smoke_needed:
        return out
    smoke = check_change_of_measure(sampler, lambda X: transform(X, identity), lambda X: density(X, identity),
                                    functionals, min(n, 2000), ctx.stream(len(fs)), f"{tag}/identity",
                                    exact=True, config=ctx.config)
    bad = [r.id for r in smoke if r.decision != "pass"]
    if bad:
        raise ConfigurationError(f"identity transformation does not reproduce the sample: {bad}")
    return out + smoke


def _qi_gamma(ctx, density_factor: float = 1.0):
    th, beta = float(ctx.p("theta")), float(ctx.p("beta"))
    sp = BaseSpace.finite(ctx.p("nu0"))
    g1 = _fn([1.0, 0.5, 0.2])
    functionals = [("laplace", lambda X: np.exp(-X.pair(g1))),
                   ("mass-ratio", lambda X: X.total_mass / (1.0 + X.total_mass))]
    sampler = lambda g_, m: smp.sample_gamma_measure(th, sp, beta, rng=g_, size=m)
    density = lambda X, f: density_factor * dens.rn_gamma_Tf(X, f, th, beta, sp).value
    return _quasi(ctx, "quasi-invariance-gamma", sampler, lambda X, f: scale_by_function(X, f), density,
                  functionals, [_fn(v) for v in ctx.p("f")], 100_000,
                  TestFunction.constant(1.0) if density_factor == 1.0 else None)


def _qi_dirichlet(ctx):
    th = float(ctx.p("theta"))
    sp = BaseSpace.finite(ctx.p("nu0"))
    g1, g2 = _fn([1.0, 0.5, 0.2]), _fn([1.0, -1.0, 0.5])
    functionals = [("laplace", lambda X: np.exp(-2.0 * X.pair(g1))), ("second-moment", lambda X: X.pair(g2) ** 2)]
    sampler = lambda g_, m: smp.sample_dirichlet_process(th, sp, rng=g_, size=m)
    return _quasi(ctx, "quasi-invariance-dirichlet", sampler,
                  lambda X, f: scale_by_function(X, f, "normalized"),
                  lambda X, f: dens.rn_dirichlet_Tf(X, f, th, sp).value, functionals,
                  [_fn(v) for v in ctx.p("f")], 100_000, TestFunction.constant(1.0))


def _partition_functionals():
    return [("homozygosity", lambda X: np.sum(to_partition(X) ** 2, axis=1)),
            ("largest", lambda X: to_partition(X)[:, 0])]


def _qi_pd(ctx):
    th = float(ctx.p("theta"))
    sampler = lambda g_, m: smp.sample_dirichlet_process(th, UNIT, rng=g_, size=m)
    # the functionals only see to_partition, which discards the normalization of T_f
    return _quasi(ctx, "quasi-invariance-pd", sampler, lambda X, f: scale_by_function(X, f),
                  lambda X, f: dens.rn_pd_theta((X.sorted_weights(), X.tail), f, th, UNIT).value,
                  _partition_functionals(), [_step(v) for v in ctx.p("f")], 20_000, TestFunction.constant(1.0))


def _qi_pd_two(ctx):
    al, th, K = float(ctx.p("alpha")), float(ctx.p("theta")), int(ctx.p("sticks"))
    trunc = smp.TruncationPolicy.fixed(K)
    sampler = lambda g_, m: smp.sample_dirichlet_process(th, UNIT, trunc, rng=g_, size=m, alpha=al)
    return _quasi(ctx, "quasi-invariance-pd-two-param", sampler, lambda X, f: scale_by_function(X, f),
                  lambda X, f: dens.rn_pd_two_param((X.sorted_weights(), X.tail), f, al, th, UNIT).value,
                  _partition_functionals(), [_step(v) for v in ctx.p("f")], 20_000, TestFunction.constant(1.0))


def _qi_jumps(ctx):
    th, beta = float(ctx.p("theta")), float(ctx.p("beta"))
    sampler = lambda g_, m: smp.sample_gamma_measure(th, UNIT, beta, rng=g_, size=m)
    functionals = [("largest", lambda X: np.exp(-X.sorted_weights()[:, 0])),
                   ("second", lambda X: X.sorted_weights()[:, 1])]
    return _quasi(ctx, "quasi-invariance-jumps", sampler, lambda X, f: scale_by_function(X, f),
                  lambda X, f: dens.rn_jumps_Tf((X.sorted_weights(), X.tail), f, th, beta, UNIT).value,
                  functionals, [_step(v) for v in ctx.p("f")], 100_000, TestFunction.constant(1.0))


def _stationary_coefficients(ctx):
    sp = BaseSpace.finite(ctx.p("nu0"))
    a, b = _fn(ctx.p("a")), _fn(ctx.p("b"))
    mu0 = AtomicMeasure.from_dense(np.asarray(ctx.p("mu0"), float), sp)
    return sp, a, b, mu0


def _qi_lambda(ctx):
    sp, a, b, mu0 = _stationary_coefficients(ctx)
    g1 = _fn([1.0, 0.5, 0.2])
    functionals = [("laplace", lambda X: np.exp(-X.pair(g1))),
                   ("mass-ratio", lambda X: X.total_mass / (1.0 + X.total_mass))]
    sampler = lambda g_, m: smp.sample_finite_gamma_stationary(a, b, mu0, g_, size=m)
    neg = lambda f: f.map(lambda v: -v, -f.upper, -f.lower)
    density = lambda X, f: np.exp(dens.lambda_functional(X, neg(f), a, b, mu0))
    return _quasi(ctx, "quasi-invariance-lambda", sampler, lambda X, f: scale_by_function(X, f, "exponential"),
                  density, functionals, [_fn(v) for v in ctx.p("f")], 100_000, TestFunction.constant(0.0))


# --- deterministic density and Hamiltonian checks ---------------------------

def _pd_limits(ctx):
    th, cfg = float(ctx.p("theta")), ctx.config
    st = ctx.stream(0)
    P = smp.sample_pd(th, rng=st, size=int(ctx.p("partitions")))
    fs = [_step(v) for v in ctx.p("f")]
    out = []
    ones = [float(dens.rn_pd_two_param(P, f, a, 0.0, UNIT).value.max()) for f in fs for a in (0.25, 0.5, 0.75)]
    lows = [float(dens.rn_pd_two_param(P, f, a, 0.0, UNIT).value.min()) for f in fs for a in (0.25, 0.5, 0.75)]
    out.append(tolerance_report("pd-two-param-limits/theta-zero-max", max(ones), 1.0, 0.0, _seed(st), cfg))
    out.append(tolerance_report("pd-two-param-limits/theta-zero-min", min(lows), 1.0, 0.0, _seed(st), cfg))
    al = float(ctx.p("alpha_small"))
    for k, f in enumerate(fs):
        two = dens.rn_pd_two_param(P, f, al, th, UNIT).value
        one = dens.rn_pd_theta(P, f, th, UNIT).value
        i = int(np.argmax(np.abs(two - one) / one))
        out.append(tolerance_report(f"pd-two-param-limits/alpha-to-zero/f{k}", two[i], one[i], 1e-3, _seed(st), cfg,
                                    relative=True, notes={"alpha": al}))
    return out


def _hamiltonian(ctx):
    th, beta, cfg = float(ctx.p("theta")), float(ctx.p("beta")), ctx.config
    sp = BaseSpace.finite(ctx.p("nu0"))
    st = ctx.stream(0)
    gen = st.generator()
    worst, pair = -1.0, (0.0, 0.0)
    for _ in range(int(ctx.p("points"))):
        mu = AtomicMeasure.from_dense(gen.dirichlet(np.ones(sp.size)), sp)
        hg = dens.hamiltonian_gamma(mu, th, beta, sp)
        hd = dens.hamiltonian_dirichlet(mu, th, sp)
        if abs(hg - hd) > worst:
            worst, pair = abs(hg - hd), (hg, hd)
    notes = {"theta_beta": th * beta}
    out = [tolerance_report("hamiltonian/unit-mass", pair[0], pair[1], 1e-12, _seed(st), cfg, notes=notes)]
    sing = AtomicMeasure.from_dense(np.r_[0.0, np.ones(sp.size - 1)] / (sp.size - 1), sp)
    out.append(tolerance_report("hamiltonian/singular", dens.hamiltonian_gamma(sing, th, beta, sp),
                                dens.hamiltonian_dirichlet(sing, th, sp), 0.0, _seed(st), cfg))
    return out


# --- lines of descent -------------------------------------------------------

def _coalescent(ctx):
    n, cfg, out = ctx.n(100_000), ctx.config, []
    k = 0
    for th in ctx.p("theta"):
        for t in ctx.p("t"):
            th, t = float(th), float(t)
            pmf = lin.tavare_distribution(th, t)
            out.append(tolerance_report(f"coalescent-pmf/theta={th:g}/t={t:g}/normalization",
                                        float(pmf.normalization_error), 0.0, 1e-8, "", cfg,
                                        notes={"method": pmf.method}))
            st = ctx.stream(k)
            k += 1
            x = replicate(lambda g_, m: lin.simulate_kingman(th, t, rng=g_, size=m), n, st)
            out.append(check_pmf_fit(x, pmf.probs, id=f"coalescent-pmf/theta={th:g}/t={t:g}/kingman",
                                     seed=_seed(st), config=cfg))
    return out


def _time_change(ctx):
    th, t, n, cfg = float(ctx.p("theta")), float(ctx.p("t")), ctx.n(100_000), ctx.config
    pmf = lin.tavare_distribution(th, t)
    out = []
    for k, (a, lam) in enumerate(ctx.p("cells")):
        a, lam = float(a), float(lam)
        tag = f"time-change/a={a:g}/lambda={lam:g}"
        st = ctx.stream(k, 0)
        counts, ex = replicate(lambda g_, m: lin.time_changed_counts(a, lam, th, t, m, g_), n, st)
        rep = check_pmf_fit(counts, pmf.probs, id=tag, seed=_seed(st), config=cfg)
        rep.notes["exhausted"] = int(ex.sum())
        out.append(rep)
        st = ctx.stream(k, 1)
        nt = replicate(lambda g_, m: lin.death_counts_at(a, lam, t, m, g_), n, st)
        out.append(check_pmf_fit(nt, lambda j: lin.death_marginal_pmf(a, lam, t, j), id=f"{tag}/death-marginal",
                                 seed=_seed(st), config=cfg))
        st = ctx.stream(k, 2)
        gen = st.generator()
        t0 = lin.default_t0(a, lam)
        over, used, worst = 0, 0, 0.0
        for _ in range(int(ctx.p("refinements"))):
            path = lin.simulate_death_path(a, lam, t0, 50.0, gen)
            try:
                tc = lin.time_change_tau(path, th, t)
                tc2 = lin.time_change_tau(lin.refine(path, t0 / 2, gen), th, t)
            except lin.ClockExhausted:
                continue
            used += 1
            gap = abs(tc2.tau - tc.tau)
            worst = max(worst, gap / max(tc.bound, 1e-300))
            over += gap > tc.bound
        out.append(tolerance_report(f"{tag}/refinement", over, 0, 0, _seed(st), cfg,
                                    notes={"paths": used, "worst_gap_over_bound": worst}))
    return out


# --- transition functions ---------------------------------------------------

def _pairs(gs):
    g1, g2, g3 = gs
    E = lambda g: (lambda X: _laplace(X, g))
    L = lambda g: (lambda X: X @ g)
    return [("exp-exp", E(g1), E(g2)), ("exp-linear", E(g1), L(g3)), ("linear-linear", L(g1), L(g2)),
            ("square-exp", lambda X: (X @ g1) ** 2, E(g3)), ("exp-product", E(g3), lambda X: (X @ g1) * (X @ g2))]


def _reversibility(ctx):
    th, lam, n, cfg = float(ctx.p("theta")), float(ctx.p("lam")), ctx.n(100_000), ctx.config
    sp = BaseSpace.finite(ctx.p("nu0"))
    gen = ctx.design(0)
    gs = [gen.uniform(0.0, 1.5, sp.size) for _ in range(3)]
    out, k = [], 0
    gamma_st = lambda g_, m: smp.sample_gamma_measure(th, sp, 1.0 / lam, rng=g_, size=m, method="coordinates").weights
    dir_st = lambda g_, m: smp.sample_dirichlet_vector(th * sp.probs, g_, size=m)
    for t in ctx.p("t"):
        t = float(t)
        out += check_detailed_balance(gamma_st, lambda X, g_, t=t: dyn.sample_Q1(t, X, th, lam, sp, rng=g_),
                                      _pairs(gs), n, ctx.stream(k), f"reversibility/Q1/t={t:g}", config=cfg)
        out += check_detailed_balance(dir_st, lambda X, g_, t=t: dyn.sample_Q2(t, X, th, sp, rng=g_),
                                      _pairs(gs), n, ctx.stream(k + 1), f"reversibility/Q2/t={t:g}", config=cfg)
        k += 2
    t = float(ctx.p("t_chapman"))
    mu = np.asarray(ctx.p("start"), float)
    nu = mu / mu.sum()
    probes = [(f"laplace{j}", lambda X, g=g: _laplace(X, g)) for j, g in enumerate(gs)]
    two = lambda g_, m: dyn.sample_Q1(t / 2, dyn.sample_Q1(t / 2, mu, th, lam, sp, rng=g_, size=m), th, lam, sp, rng=g_)
    one = lambda g_, m: dyn.sample_Q1(t, mu, th, lam, sp, rng=g_, size=m)
    out += check_distribution_equality(two, one, probes, n, ctx.stream(k), "reversibility/chapman-kolmogorov/Q1",
                                       config=cfg)
    two = lambda g_, m: dyn.sample_Q2(t / 2, dyn.sample_Q2(t / 2, nu, th, sp, rng=g_, size=m), th, sp, rng=g_)
    one = lambda g_, m: dyn.sample_Q2(t, nu, th, sp, rng=g_, size=m)
    out += check_distribution_equality(two, one, probes, n, ctx.stream(k + 1), "reversibility/chapman-kolmogorov/Q2",
                                       config=cfg)
    return out


def _fixed_time(ctx):
    th, t, n, cfg = float(ctx.p("theta")), float(ctx.p("t")), ctx.n(100_000), ctx.config
    sp = BaseSpace.finite(ctx.p("nu0"))
    mu = np.asarray(ctx.p("start"), float)
    r = float(mu.sum())
    gen = ctx.design(0)
    gs = [gen.uniform(0.0, 1.5, sp.size) for _ in range(3)]
    pmf = lin.tavare_distribution(th, t)
    out, routes = [], {}
    for k, lam in enumerate(ctx.p("lam")):
        lam = float(lam)
        tag = f"fixed-time/lambda={lam:g}"
        st = ctx.stream(k)

        def run(g_, m, lam=lam):
            s = dyn.sample_fixed_time_identities(t, mu, th, lam, sp, g_, m)
            return s.Y_counts, s.Y_route, s.Y_direct, s.X_counts, s.X_route, s.X_direct, s.exhausted
        Yn, Yr, Yd, Xn, Xr, Xd, ex = replicate(run, n, st)
        seed = _seed(st)
        E = EstimateWithError.from_samples
        for j, g in enumerate(gs):
            out.append(compare_unpaired(f"{tag}/Y/laplace{j}", E(_laplace(Yr, g)), E(_laplace(Yd, g)), seed, cfg))
        for j, g in enumerate(gs[:2]):
            out.append(compare_unpaired(f"{tag}/X/mean{j}", E(Xr @ g), E(Xd @ g), seed, cfg))
            out.append(compare_unpaired(f"{tag}/X/second-moment{j}", E((Xr @ g) ** 2), E((Xd @ g) ** 2), seed, cfg))
        out.append(check_pmf_fit(Yn, lambda j, lam=lam: lin.death_marginal_pmf(r, lam, t, j), id=f"{tag}/Y/counts",
                                 seed=seed, config=cfg))
        rep = check_pmf_fit(Xn, pmf.probs, id=f"{tag}/X/counts", seed=seed, config=cfg)
        rep.notes["exhausted"] = int(ex.sum())
        out.append(rep)
        routes[lam] = Xr
    base = sorted(routes)[len(routes) // 2]
    for lam, Xr in sorted(routes.items()):
        if lam == base:
            continue
        for j, g in enumerate(gs[:2]):
            out.append(compare_unpaired(f"fixed-time/lambda-independence/{lam:g}-vs-{base:g}/mean{j}",
                                        EstimateWithError.from_samples(routes[lam] @ g),
                                        EstimateWithError.from_samples(routes[base] @ g), "", cfg))
    return out


# --- generators -------------------------------------------------------------

def _general_params(ctx):
    sp, a, b, mu0 = _stationary_coefficients(ctx)
    return sp, a, b, mu0, dyn.GeneratorParams.general(a, b, mu0, sp)


def _generator(ctx):
    th, lam, cfg = float(ctx.p("theta")), float(ctx.p("lam")), ctx.config
    sp, a, b, mu0, gp = _general_params(ctx)
    st = ctx.stream(0)
    gen = st.generator()
    g1, g2, g3 = (gen.uniform(0.0, 1.5, sp.size) for _ in range(3))
    F = dyn.CylinderFunction.exponential(g1)
    G = dyn.CylinderFunction.monomial([g2, g3], [2, 1])
    out = []
    families = {"MBI": dyn.GeneratorParams.mbi(th, lam, sp), "FVP": dyn.GeneratorParams.fvp(th, sp), "General": gp}
    pts = int(ctx.p("points"))
    for name, params in families.items():
        worst = 0.0
        for _ in range(pts):
            x = gen.dirichlet(np.ones(sp.size)) if name == "FVP" else gen.uniform(0.05, 2.0, sp.size)
            lhs = float(dyn.apply_generator(params, F * G, x))
            rhs = float(F(x) * dyn.apply_generator(params, G, x) + G(x) * dyn.apply_generator(params, F, x)
                        + 2 * dyn.carre_du_champ(params, F, G, x))
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        out.append(tolerance_report(f"generator/product-rule/{name}", worst, 0.0, 1e-10, _seed(st), cfg))
    worst = 0.0
    for _ in range(pts):
        x = gen.uniform(0.05, 2.0, sp.size)
        worst = max(worst, dyn.check_projection_identity(th, lam, F * G, x, nu0=sp).relative)
    out.append(tolerance_report("generator/projection", worst, 0.0, 1e-10, _seed(st), cfg))
    y = gen.uniform(0.2, 1.5, 3)
    outers = {"exponential": F, "monomial": G, "product": F * G, "lift": (F * G).homogeneous_lift(3)}
    for name, H in outers.items():
        yy = y[:H.inner.shape[0]] if H.inner.shape[0] <= 3 else np.r_[1.3, y][:H.inner.shape[0]]
        out.append(tolerance_report(f"generator/partials/{name}", H.partials_error(yy), 0.0, 1e-6, _seed(st), cfg))

    # weak consistency with the transition functions
    n, deltas = ctx.n(200_000), [float(d) for d in ctx.p("deltas")]
    nu = np.asarray(ctx.p("start"), float)
    nu = nu / nu.sum()
    p0 = np.asarray(sp.probs)
    out.append(check_generator_consistency(
        "generator/weak-consistency/FVP", F, nu, float(dyn.apply_generator(families["FVP"], F, nu)),
        lambda d, g_, m: dyn.sample_Q2(d, nu, th, sp, rng=g_, size=m), deltas, n, ctx.stream(1),
        mean_at=lambda d: p0 + (nu - p0) * math.exp(-th * d / 2), config=cfg))
    mu = np.asarray(ctx.p("start"), float)
    out.append(check_generator_consistency(
        "generator/weak-consistency/MBI", F, mu, float(dyn.apply_generator(families["MBI"], F, mu)),
        lambda d, g_, m: dyn.sample_Q1(d, mu, th, lam, sp, rng=g_, size=m), deltas, n, ctx.stream(2),
        mean_at=lambda d: mu * math.exp(-lam * d / 2) + th * p0 * lin.c_factor(-lam, d),
        config=cfg))

    # symmetry and invariance of the general generator under its gamma law
    st = ctx.stream(3)
    A = lambda H, X: dyn.apply_generator(gp, H, X)
    E2 = dyn.CylinderFunction.exponential(g2)

    def run(g_, m):
        X = smp.sample_finite_gamma_stationary(a, b, mu0, g_, size=m).weights
        return F(X) * A(E2, X), E2(X) * A(F, X), A(F, X), A(G, X)
    fl, fr, lf, lg = replicate(run, ctx.n(100_000), st)
    out.append(compare_paired("generator/symmetry/General", fl, fr, _seed(st), cfg, scale=float(np.mean(np.abs(fl)))))
    out.append(check_against_value("generator/invariance/exponential", lf, 0.0, _seed(st), cfg,
                                   scale=float(np.mean(np.abs(lf)))))
    out.append(check_against_value("generator/invariance/monomial", lg, 0.0, _seed(st), cfg,
                                   scale=float(np.mean(np.abs(lg)))))
    return out


def _sde(ctx, variant_check: bool = True):
    cfg = ctx.config
    sp, a, b, mu0, gp = _general_params(ctx)
    mu = AtomicMeasure.from_dense(np.asarray(ctx.p("start"), float), sp)
    f = _fn(ctx.p("f"))
    t, h, n = float(ctx.p("t")), float(ctx.p("step")), ctx.n(100_000)
    fv = f.values_on(sp)
    ests = []
    for k, step in enumerate((2 * h, h)):
        st = ctx.stream(k)
        x = replicate(lambda g_, m, s=step: dyn.sde_oracle(gp, mu, t, s, g_, m), n, st)
        ests.append(EstimateWithError.from_samples(_laplace(x, fv), _seed(st)))
    bias = abs(ests[0].value - ests[1].value)
    out = []
    for variant in ("corrected",) if variant_check else ("literal",):
        exact = dens.laplace_mbi_time_t(a, b, mu0, mu, t, f, variant)
        rep = compare_unpaired(f"sde/laplace-{variant}", ests[1], EstimateWithError.exact(exact), ests[1].seed, cfg,
                               bias=bias)
        rep.notes.update({"step": h, "coarse_estimate": ests[0].value, "variant": variant})
        out.append(rep)
    if not variant_check:
        return out
    # stationary marginals after a long run
    T, hs, m_st = float(ctx.p("t_stationary")), float(ctx.p("step_stationary")), ctx.n(20_000)
    st = ctx.stream(2)
    x = replicate(lambda g_, m: dyn.sde_oracle(gp, mu, T, hs, g_, m), m_st, st)
    av, bv, m0 = a.values_on(sp), b.values_on(sp), mu0.dense()
    for s in range(sp.size):
        cdf = stats.gamma(m0[s] / av[s], scale=av[s] / bv[s]).cdf
        out.append(ks_report(f"sde/stationary/coordinate{s}", x[:, s], cdf, _seed(st), cfg))
    # one-point space: transition function against the SDE
    one = BaseSpace.finite([1.0])
    th, lam, r = float(ctx.p("theta")), float(ctx.p("lam")), float(ctx.p("mass"))
    st = ctx.stream(3)
    q = replicate(lambda g_, m: dyn.sample_Q1(t, [r], th, lam, one, rng=g_, size=m)[:, 0], m_st, st.substream(0))
    s_ = replicate(lambda g_, m: dyn.sde_oracle(dyn.GeneratorParams.mbi(th, lam, one), [r], t, h, g_, m)[:, 0],
                   m_st, st.substream(1))
    out.append(ks_report("sde/one-point/Q1-vs-sde", q, s_, _seed(st), cfg))
    # zero noise: the ODE solution
    z = dyn.GeneratorParams.general(0.0, b, mu0, sp, allow_zero_noise=True)
    xz = dyn.sde_oracle(z, mu, t, h, ctx.stream(4), 1)[0]
    ode = m0 / bv + (mu.dense() - m0 / bv) * np.exp(-bv * t)
    out.append(tolerance_report("sde/zero-noise", float(np.max(np.abs(xz - ode))), 0.0, 10 * h, "", cfg))
    return out


# --- large deviations -------------------------------------------------------

def _ldp(ctx):
    st, cfg = ctx.stream(0), ctx.config
    gen = st.generator()
    worst_gap, worst_arg = 0.0, 0.0
    worst5 = 0.0
    for _ in range(int(ctx.p("points"))):
        k = int(gen.integers(1, 11))
        x = np.sort(gen.exponential(float(ctx.p("scale")) / k, k))[::-1]
        res = ldp.contraction_check(x)
        s = float(x.sum())
        worst_gap = max(worst_gap, abs(res.infimum - s))
        worst_arg = max(worst_arg, abs(res.argmin - (1 + s)))
        worst5 = max(worst5, abs(ldp.contraction_I5(x) - ldp.rate("I5", x)))
    out = [tolerance_report("ldp/contraction/infimum", worst_gap, 0.0, 1e-6, _seed(st), cfg),
           tolerance_report("ldp/contraction/argmin", worst_arg, 0.0, 1e-4, _seed(st), cfg),
           tolerance_report("ldp/contraction-I5", worst5, 0.0, 0.0, _seed(st), cfg),
           tolerance_report("ldp/contraction-I5/zero", ldp.contraction_I5(np.zeros(3)), ldp.rate("I5", np.zeros(3)),
                            0.0, _seed(st), cfg)]
    return out


# --- negative controls ------------------------------------------------------

def _cyclic_chain():
    P = np.array([[0.1, 0.8, 0.1], [0.1, 0.1, 0.8], [0.8, 0.1, 0.1]])
    cum = np.cumsum(P, axis=1)
    stationary = lambda g_, m: g_.integers(0, 3, m)
    step = lambda X, g_: np.minimum((g_.random(X.size)[:, None] > cum[X]).sum(1), 2)
    return stationary, step


def _negative(ctx):
    n, cfg = ctx.n(100_000), ctx.config
    out = []
    # quasi-invariance with the density doubled
    sub = Context(ctx.seed, dict(SUITES["quasi-invariance-gamma"].defaults), ctx.replicates)
    out += _qi_gamma(sub, density_factor=2.0)
    for r in out:
        r.id = "negative/" + r.id
    sp = BaseSpace.finite([0.2, 0.3, 0.5])
    g = np.array([1.0, 0.5, 0.2])
    out += check_distribution_equality(
        lambda g_, m: smp.sample_gamma_measure(1.0, sp, rng=g_, size=m, method="coordinates").weights,
        lambda g_, m: smp.sample_gamma_measure(2.0, sp, rng=g_, size=m, method="coordinates").weights,
        [("laplace", lambda X: _laplace(X, g))], n, ctx.stream(0), "negative/gamma-theta-1-vs-2", config=cfg)
    out.append(check_independence(
        lambda g_, m: smp.sample_gamma_measure(2.0, sp, rng=g_, size=m, method="coordinates").weights,
        lambda X: X.sum(1), lambda X: X.sum(1), n, ctx.stream(1), "negative/independence-same-statistic",
        config=cfg))
    stationary, step = _cyclic_chain()
    out += check_detailed_balance(stationary, step, [("indicators", lambda X: (X == 0) * 1.0,
                                                      lambda X: (X == 1) * 1.0)],
                                  n, ctx.stream(2), "negative/detailed-balance-cyclic-chain", config=cfg)
    st = ctx.stream(3)
    nt = replicate(lambda g_, m: lin.death_counts_at(1.0, 1.0, 0.5, m, g_), n, st)
    out.append(check_pmf_fit(nt, lin.tavare_distribution(2.0, 0.5).probs, id="negative/untimed-counts-vs-tavare",
                             seed=_seed(st), config=cfg))
    sub = Context(ctx.seed, dict(SUITES["sde-adjudication"].defaults), ctx.replicates)
    for r in _sde(sub, variant_check=False):
        r.id = "negative/" + r.id
        out.append(r)
    x = np.array([0.4, 1.1, 0.7])
    Phi = dyn.CylinderFunction.exponential(g)
    res = dyn.check_projection_identity(2.0, 1.0, Phi, x, constant=2.0, nu0=sp)
    out.append(tolerance_report("negative/projection-constant-2", res.lhs, res.rhs, 1e-10, "", cfg,
                                relative=True))
    return out


# --- samplers ---------------------------------------------------------------

def _sampler_moments(ctx):
    n, cfg, out = ctx.n(100_000), ctx.config, []
    th = float(ctx.p("theta"))
    st = ctx.stream(0)
    V = replicate(lambda g_, m: smp.sample_gem(th, 2, g_, size=m).sticks, n, st)
    out.append(check_against_value("samplers/gem/first-stick", V[:, 0], 1 / (1 + th), _seed(st), cfg))
    out.append(check_against_value("samplers/gem/second-stick", V[:, 1], th / (1 + th) ** 2, _seed(st), cfg))
    al = float(ctx.p("alpha"))
    st = ctx.stream(1)
    V = replicate(lambda g_, m: smp.sample_gem_two_param(al, th, 1, g_, size=m).sticks, n, st)
    out.append(check_against_value("samplers/gem-two-param/first-stick", V[:, 0], (1 - al) / (1 + th), _seed(st), cfg))
    st = ctx.stream(2)
    P1 = replicate(lambda g_, m: smp.sample_pd(1.0, rng=g_, size=m).weights[:, 0], n, st)
    # Golomb-Dickman constant
    out.append(check_against_value("samplers/pd/largest-theta-1", P1, 0.6243299885435508, _seed(st), cfg))
    st = ctx.stream(3)
    x = replicate(lambda g_, m: smp.sample_gamma_jumps_inverse_levy(th, 20, g_, size=m)[0], n, st)
    out.append(check_against_value("samplers/jumps/count-above-1", (x > 1).sum(1), th * special.exp1(1.0),
                                   _seed(st), cfg))
    st = ctx.stream(4)
    dec = replicate(lambda g_, m: smp.sample_gamma_measure(th, UNIT, rng=g_, size=m).sorted_weights()[:, 0],
                    n // 2, st)
    out.append(ks_report("samplers/jumps/largest-two-routes", x[: n // 2, 0], dec, _seed(st), cfg))
    sa, c, K = float(ctx.p("stable_alpha")), 1.0, 2000
    g = _random_step(ctx.design(0), 0.2, 2.0)
    st = ctx.stream(5)
    vals, tails = replicate(lambda g_, m: (lambda M: (np.exp(-M.pair(g)), M.tail))(
        smp.sample_stable_measure(sa, c, UNIT, K, g_, size=m)), n, st)
    out.append(check_against_value("samplers/stable/laplace", vals, dens.laplace_stable(sa, c, UNIT, g), _seed(st),
                                   cfg, bias=float(tails.mean() * g.upper)))
    st = ctx.stream(6)
    sp = BaseSpace.finite(ctx.p("nu0"))
    a, b = _fn([1.0, 0.5, 2.0]), _fn([1.0, 2.0, 0.5])
    mu0 = AtomicMeasure.from_dense(np.array([0.5, 1.0, 0.8]), sp)
    hv = np.array([0.3, 1.0, 0.6])
    X = replicate(lambda g_, m: smp.sample_finite_gamma_stationary(a, b, mu0, g_, size=m).weights, n, st)
    av, bv, m0 = a.values_on(sp), b.values_on(sp), mu0.dense()
    exact = float(np.prod((1 + av / bv * hv) ** (-m0 / av)))
    out.append(check_against_value("samplers/finite-gamma-stationary/laplace", _laplace(X, hv), exact, _seed(st), cfg))
    st = ctx.stream(7)
    gu = _random_step(ctx.design(1), -1.0, 1.0)
    D = replicate(lambda g_, m: smp.sample_dirichlet_process(th, UNIT, rng=g_, size=m).pair(gu), n, st)
    out.append(check_against_value("samplers/dirichlet-process/mean", D, UNIT.integrate(gu), _seed(st), cfg,
                                   scale=1.0))
    return out


# --- registry ---------------------------------------------------------------

_NU0 = [0.2, 0.3, 0.5]
_F_FINITE = [[0.7, 1.3, 1.1], [1.5, 0.8, 1.0], [0.6, 0.9, 1.6]]
_F_STEP = [[0.5, 1.5, 1.0], [1.4, 0.8], [1.2, 0.6, 1.5, 0.9]]
_GENERAL = {"nu0": _NU0, "a": [0.5, 1.0, 0.4], "b": [1.0, 2.0, 1.5], "mu0": [1.0, 1.5, 0.8]}

SUITES: dict[str, Suite] = {}


def _register(name, summary, defaults, runner, criterion=None):
    SUITES[name] = Suite(name, summary, defaults, runner, criterion)


_register("gamma-laplace", "Laplace functional of the gamma random measure", {
    "theta": [0.5, 1.0, 2.0], "beta": 1.0, "functions": 5}, _gamma_laplace, 1)
_register("gamma-dirichlet", "Independence of total mass and normalized gamma measure", {
    "theta": 2.0, "beta": 1.0, "nu0": _NU0}, _gamma_dirichlet, 2)
_register("algebraic-identities", "Additive, mixing and self-similarity identities", {
    "theta1": 1.0, "theta2": 2.0, "nu1": [0.6, 0.3, 0.1], "nu2": [0.1, 0.2, 0.7], "theta": 3.0,
    "nu0_restriction": [0.1, 0.2, 0.3, 0.4]}, _algebraic, 3)
_register("quasi-invariance-gamma", "Gamma measure under T_f", {
    "theta": 1.5, "beta": 1.0, "nu0": _NU0, "f": _F_FINITE}, _qi_gamma, 4)
_register("quasi-invariance-dirichlet", "Dirichlet process under normalized T_f", {
    "theta": 2.0, "nu0": _NU0, "f": [[0.7, 1.3, 1.1], [3.0, 0.5, 1.0], [0.6, 0.9, 2.5]]}, _qi_dirichlet, 4)
_register("quasi-invariance-pd", "Poisson-Dirichlet PD(theta) under random reweighting", {
    "theta": 1.0, "f": _F_STEP}, _qi_pd, 4)
_register("quasi-invariance-jumps", "Ordered jumps of the gamma process under T_f", {
    "theta": 1.0, "beta": 1.0, "f": _F_STEP}, _qi_jumps, 4)
_register("quasi-invariance-pd-two-param", "PD(alpha, theta) under random reweighting", {
    "alpha": 0.3, "theta": 1.0, "sticks": 200, "f": _F_STEP}, _qi_pd_two, 4)
_register("quasi-invariance-lambda", "Stationary branching law under S_f", dict(
    _GENERAL, f=[[0.3, -0.4, 0.1], [-0.5, 0.5, 0.0], [0.45, 0.2, -0.3]]), _qi_lambda, 4)
_register("pd-two-param-limits", "Two-parameter density at theta = 0 and alpha -> 0", {
    "theta": 1.0, "alpha_small": 1e-3, "partitions": 20, "f": _F_STEP}, _pd_limits, 5)
_register("hamiltonian", "Gamma and Dirichlet Hamiltonians at unit mass", {
    "theta": 2.0, "beta": 0.5, "nu0": _NU0, "points": 50}, _hamiltonian, 6)
_register("coalescent-pmf", "Coalescent pmf against the Kingman death chain", {
    "theta": [0.5, 1.0, 2.0, 5.0], "t": [0.25, 0.5, 1.0, 2.0]}, _coalescent, 7)
_register("time-change", "Death chain time-changed onto the coalescent (one cell)", {
    "theta": 2.0, "t": 0.5, "cells": [[1.0, 1.0]], "refinements": 200}, _time_change)
_register("time-change-grid", "Time change over the (a, lambda) grid", {
    "theta": 2.0, "t": 0.5, "refinements": 200,
    "cells": [[a, lam] for a in (0.5, 1.0, 4.0) for lam in (-1.0, 0.0, 1.0)]}, _time_change, 8)
_register("reversibility", "Detailed balance and Chapman-Kolmogorov for Q1 and Q2", {
    "theta": 1.0, "lam": 1.0, "nu0": _NU0, "t": [0.25, 1.0], "t_chapman": 1.0, "start": [0.5, 1.0, 0.3]},
    _reversibility, 9)
_register("fixed-time", "Fixed-time identities for Y_t and X_t", {
    "theta": 1.5, "t": 0.5, "nu0": _NU0, "lam": [-1.0, 0.0, 1.0], "start": [0.3, 0.5, 0.2]}, _fixed_time, 10)
_register("generator-identities", "Product rule, projection identity and weak generator consistency", dict(
    _GENERAL, theta=1.0, lam=1.0, points=100, deltas=[0.02, 0.01, 0.005], start=[0.2, 0.5, 0.3]), _generator, 11)
_register("sde-adjudication", "Closed-form Laplace functional against an SDE oracle", dict(
    _GENERAL, start=[1.0, 0.5, 2.0], f=[0.5, 1.0, 0.3], t=0.5, step=1e-3, t_stationary=8.0,
    step_stationary=2e-3, theta=1.0, lam=1.0, mass=2.0), _sde, 12)
_register("ldp-contraction", "Contraction relations between the jump rate functions", {
    "points": 100, "scale": 5.0}, _ldp, 13)
_register("negative-controls", "Deliberately broken checks; every report should fail", {}, _negative, 14)
_register("sampler-moments", "Moments and laws of the basic samplers", {
    "theta": 2.0, "alpha": 0.5, "stable_alpha": 0.5, "nu0": _NU0}, _sampler_moments)
