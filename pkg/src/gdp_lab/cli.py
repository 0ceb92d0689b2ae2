"""Command-line front end: ``gdp-lab {list,verify,sample,eval}``.

Configs are YAML files validated against ``config_schema.json``; command-line
flags override file values.  ``verify`` exits 0 when every report passes, 2
when any fails, 3 when some are inconclusive and none fail, and 1 on a
configuration error.

CSV conventions: one row per draw.  Measures are flattened as ``weight:location``
cells (up to the truncation), partitions and jump sequences as weights, counts
as a single ``value`` column, finite-space coordinates as ``coord_<s>``.  The
last column ``tail`` carries the truncation residual where there is one.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources

import jsonschema
import numpy as np
import yaml

from . import densities as dens
from . import dynamics as dyn
from . import ldp
from . import lineages as lin
from . import samplers as smp
from .measures import AtomicMeasure, BaseSpace, ContractError, DomainError, TestFunction
from .rng import RngStream
from .suites import SUITES
from .verify import ConfigurationError, reports_to_csv, reports_to_json, summarize

EXIT = {"pass": 0, "fail": 2, "inconclusive": 3}
EXIT_CONFIG = 1


def load_schema() -> dict:
    return json.loads(resources.files("gdp_lab").joinpath("config_schema.json").read_text())


def validate(config: dict) -> None:
    """Raise ConfigurationError naming the offending key path."""
    v = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(v.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            path = ".".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{path}: {e.message}")
        raise ConfigurationError("; ".join(msgs))


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"config {path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError("<root>: config must be a mapping")
    return data


def _parse_param(text: str):
    if "=" not in text:
        raise ConfigurationError(f"--param expects key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def merged_config(args) -> dict:
    cfg = load_config(args.config)
    for key in ("suite", "seed", "replicates", "format", "out"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    params = dict(cfg.get("params") or {})
    for item in getattr(args, "param", None) or []:
        k, v = _parse_param(item)
        params[k] = v
    if params:
        cfg["params"] = params
    validate(cfg)
    return cfg


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- verify / list ----------------------------------------------------------

def run(config: dict) -> int:
    """Run the configured suite, write its reports, return the exit code."""
    name = config.get("suite")
    if name not in SUITES:
        raise ConfigurationError(f"suite: unknown suite {name!r}; see `gdp-lab list`")
    reports = SUITES[name].run(seed=config.get("seed", 0), replicates=config.get("replicates"),
                               params=config.get("params"))
    fmt = config.get("format", "json")
    _emit((reports_to_json(reports) + "\n") if fmt == "json" else reports_to_csv(reports), config.get("out"))
    verdict = summarize(reports)
    print(f"{name}: {verdict} ({len(reports)} reports)", file=sys.stderr)
    return EXIT[verdict]


def cmd_list(args) -> int:
    for s in SUITES.values():
        print(f"{s.name:32s} {s.summary}")
    return 0


# --- sample -----------------------------------------------------------------

def _space(cfg) -> BaseSpace:
    bs = cfg.get("base_space") or {"kind": "unit-interval"}
    if bs["kind"] == "unit-interval":
        return BaseSpace.unit_interval()
    if "probs" not in bs:
        raise ConfigurationError("base_space.probs: required for a finite-discrete space")
    return BaseSpace.finite(bs["probs"])


def _trunc(cfg) -> smp.TruncationPolicy:
    tr = cfg.get("truncation")
    return smp.TruncationPolicy(tr["mode"], tr["value"]) if tr else smp.DEFAULT_TRUNCATION


def _req(params, key, kinds):
    if key not in params:
        raise ConfigurationError(f"params.{key}: required by {kinds}")
    return params[key]


def _draws(kind: str, cfg: dict, size: int, gen):
    """(rows, style, tails) for a sample kind; style picks the CSV layout."""
    p = cfg.get("params") or {}
    get = lambda k, d=None: p.get(k, d) if d is not None else _req(p, k, kind)
    if kind == "pd":
        b = smp.sample_pd(get("theta"), get("alpha", 0.0), _trunc(cfg), gen, size)
        return b.weights, "weights", b.tail
    if kind == "gem":
        g = smp.sample_gem(get("theta"), int(get("n")), gen, size=size)
        return g.sticks, "weights", g.tail
    if kind in ("dirichlet-process", "gamma-measure"):
        sp = _space(cfg)
        if kind == "gamma-measure":
            m = smp.sample_gamma_measure(get("theta"), sp, get("beta", 1.0), _trunc(cfg), gen, size)
        else:
            m = smp.sample_dirichlet_process(get("theta"), sp, _trunc(cfg), gen, size, get("alpha", 0.0))
        return m, "atoms", m.tail
    if kind == "gamma-jumps":
        x, tail = smp.sample_gamma_jumps_inverse_levy(get("theta"), int(get("n")), gen, size=size)
        return x, "weights", tail
    if kind == "stable-jumps":
        x, tail = smp.sample_stable_jumps(get("alpha"), get("c", 1.0), int(get("n")), gen, size=size)
        return x, "weights", tail
    if kind == "coalescent-counts":
        return lin.simulate_kingman(get("theta"), get("t"), rng=gen, size=size), "value", None
    if kind == "death-counts":
        return lin.death_counts_at(get("a"), get("lam"), get("t"), size, gen), "value", None
    if kind == "time-changed-counts":
        n, _ = lin.time_changed_counts(get("a"), get("lam"), get("theta"), get("t"), size, gen)
        return n, "value", None
    if kind in ("Q1", "Q2"):
        sp = BaseSpace.finite(get("nu0"))
        start = np.asarray(get("start"), float)
        if kind == "Q1":
            return dyn.sample_Q1(get("t"), start, get("theta"), get("lam"), sp, rng=gen, size=size), "coords", None
        return dyn.sample_Q2(get("t"), start / start.sum(), get("theta"), sp, rng=gen, size=size), "coords", None
    if kind == "sde":
        sp = BaseSpace.finite(get("nu0"))
        params = dyn.GeneratorParams.general(get("a"), get("b"), get("mu0"), sp)
        return dyn.sde_oracle(params, get("start"), get("t"), get("step", 1e-3), gen, size), "coords", None
    raise ConfigurationError(f"unknown sample kind {kind!r}")


SAMPLE_KINDS = ("pd", "gem", "dirichlet-process", "gamma-measure", "gamma-jumps", "stable-jumps",
                "coalescent-counts", "death-counts", "time-changed-counts", "Q1", "Q2", "sde")


def _rows(draws, style):
    if style == "atoms":
        for i in range(len(draws)):
            keep = draws.weights[i] > 0
            yield [f"{w!r}:{l!r}" for w, l in zip(draws.weights[i][keep].tolist(), draws.locations[i][keep].tolist())]
    elif style == "value":
        for v in np.asarray(draws).tolist():
            yield [v]
    else:
        for row in np.asarray(draws):
            yield [repr(float(v)) for v in row if not (style == "weights" and v == 0)]


def cmd_sample(args) -> int:
    cfg = merged_config(args)
    size = int(cfg.get("replicates", 10))
    gen = RngStream(int(cfg.get("seed", 0))).generator()
    draws, style, tails = _draws(args.kind, cfg, size, gen)
    rows = list(_rows(draws, style))
    if cfg.get("format", "csv") == "json":
        recs = [{"draw": i, "values": r} | ({"tail": float(tails[i])} if tails is not None else {})
                for i, r in enumerate(rows)]
        _emit(json.dumps(recs, indent=1) + "\n", cfg.get("out"))
        return 0
    width = max((len(r) for r in rows), default=0)
    prefix = {"atoms": "atom", "weights": "w", "coords": "coord", "value": "value"}[style]
    header = ["draw"] + (["value"] if style == "value" else [f"{prefix}_{k}" for k in range(width)])
    if tails is not None:
        header.append("tail")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, r in enumerate(rows):
        cells = [i] + r + [""] * (len(header) - 1 - len(r) - (tails is not None))
        if tails is not None:
            cells.append(repr(float(tails[i])))
        w.writerow(cells)
    _emit(buf.getvalue(), cfg.get("out"))
    return 0


# --- eval -------------------------------------------------------------------

def _finite_measure(values, sp):
    return AtomicMeasure.from_dense(np.asarray(values, float), sp)


def _evaluate(name: str, p: dict):
    get = lambda k: _req(p, k, name)
    if name == "c-factor":
        return lin.c_factor(get("lam"), get("t"))
    if name == "tavare-pmf":
        return float(lin.tavare_pmf(get("theta"), get("t"), int(get("n"))))
    if name == "death-pmf":
        return float(lin.death_marginal_pmf(get("a"), get("lam"), get("t"), int(get("n"))))
    if name == "e1":
        return float(dens.exp_integral_E1(get("x")))
    if name == "rate":
        return ldp.rate(get("rate"), get("x"))
    if name == "contraction":
        return ldp.contraction_check(get("x")).infimum
    if name in ("hamiltonian-gamma", "hamiltonian-dirichlet"):
        sp = BaseSpace.finite(get("nu0"))
        mu = _finite_measure(get("mu"), sp)
        if name == "hamiltonian-gamma":
            return dens.hamiltonian_gamma(mu, get("theta"), get("beta"), sp)
        return dens.hamiltonian_dirichlet(mu, get("theta"), sp)
    if name == "laplace-gamma":
        sp = BaseSpace.finite(get("nu0"))
        return dens.laplace_gamma(get("theta"), get("beta"), sp, TestFunction.on_points(get("g")))
    if name == "rn-pd":
        sp = BaseSpace.finite(get("nu0"))
        f = TestFunction.on_points(get("f"))
        part = np.asarray(get("p"), float)
        if p.get("alpha", 0.0) > 0:
            return dens.rn_pd_two_param(part, f, p["alpha"], get("theta"), sp).value
        return dens.rn_pd_theta(part, f, get("theta"), sp).value
    if name == "laplace-mbi":
        sp = BaseSpace.finite(get("nu0"))
        fn = TestFunction.on_points
        return dens.laplace_mbi_time_t(fn(get("a")), fn(get("b")), _finite_measure(get("mu0"), sp),
                                       _finite_measure(get("start"), sp), get("t"), fn(get("f")),
                                       p.get("variant", "corrected"))
    if name == "tilt-constant":
        return dens.tilt_constant(get("alpha"), get("theta"), p.get("c", 1.0))
    raise ConfigurationError(f"unknown formula {name!r}")


EVAL_NAMES = ("c-factor", "tavare-pmf", "death-pmf", "e1", "rate", "contraction", "hamiltonian-gamma",
              "hamiltonian-dirichlet", "laplace-gamma", "rn-pd", "laplace-mbi", "tilt-constant")


def cmd_eval(args) -> int:
    cfg = merged_config(args)
    value = float(_evaluate(args.name, cfg.get("params") or {}))
    print(json.dumps({"formula": args.name, "value": value if math.isfinite(value) else repr(value)}))
    return 0


def cmd_verify(args) -> int:
    cfg = merged_config(args)
    if "suite" not in cfg:
        raise ConfigurationError("suite: required (flag --suite or config key)")
    return run(cfg)


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gdp-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fmt_default=None):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default=fmt_default)
        p.add_argument("--param", action="append", metavar="KEY=VALUE", help="parameter override (YAML value)")

    p = sub.add_parser("list", help="enumerate the verification suites")
    p.set_defaults(fn=cmd_list)
    p = sub.add_parser("verify", help="run a named suite")
    common(p)
    p.add_argument("--suite")
    p.set_defaults(fn=cmd_verify)
    p = sub.add_parser("sample", help="emit draws (CSV by default)")
    p.add_argument("kind", choices=SAMPLE_KINDS)
    common(p)
    p.set_defaults(fn=cmd_sample)
    p = sub.add_parser("eval", help="evaluate a named formula")
    p.add_argument("name", choices=EVAL_NAMES)
    common(p)
    p.set_defaults(fn=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, ContractError, DomainError, smp.ParameterError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
