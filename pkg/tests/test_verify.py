import json

import numpy as np
import pytest
from scipy import stats

from gdp_lab import verify as vf
from gdp_lab.rng import RngStream
from gdp_lab.suites import SUITES


def test_bonferroni_threshold():
    assert vf.bonferroni_threshold(1) == pytest.approx(3.0)
    assert vf.bonferroni_threshold(10) > vf.bonferroni_threshold(2) > 3.0


def test_identical_sides_give_zero_z():
    x = np.random.default_rng(0).normal(1.0, 1.0, 1000)
    r = vf.compare_paired("same", x, x)
    assert r.z == 0.0 and r.decision == "pass"


def test_shifted_sides_fail():
    x = np.random.default_rng(0).normal(1.0, 1.0, 10_000)
    assert vf.compare_paired("shift", x + 0.2, x).decision == "fail"


def test_noisy_estimate_is_inconclusive():
    x = np.random.default_rng(1).normal(0.01, 1.0, 100)
    r = vf.check_against_value("noisy", x, 0.01)
    assert r.decision == "inconclusive"
    assert r.notes["suggested_replicates"] > 100


def test_pmf_fit():
    gen = np.random.default_rng(3)
    pmf = stats.poisson.pmf(np.arange(40), 2.0)
    assert vf.check_pmf_fit(gen.poisson(2.0, 50_000), pmf).decision == "pass"
    assert vf.check_pmf_fit(gen.poisson(2.2, 50_000), pmf).decision == "fail"


def test_replicate_independent_of_threads():
    fn = lambda g, m: g.standard_normal(m)
    a = vf.replicate(fn, 50_000, RngStream(5), chunk=7000, threads=1)
    b = vf.replicate(fn, 50_000, RngStream(5), chunk=7000, threads=4)
    assert np.array_equal(a, b)


def test_reports_reproducible():
    a = vf.reports_to_json(SUITES["gamma-laplace"].run(seed=11, replicates=2000))
    b = vf.reports_to_json(SUITES["gamma-laplace"].run(seed=11, replicates=2000))
    assert a == b
    rec = json.loads(a)[0]
    assert {"id", "left", "right", "z", "decision", "seed", "config"} <= rec.keys()


def test_csv_has_header_and_rows():
    text = vf.reports_to_csv(SUITES["hamiltonian"].run())
    lines = text.strip().splitlines()
    assert lines[0].startswith("id") and len(lines) == 3
