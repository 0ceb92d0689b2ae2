import json

import pytest

from gdp_lab import cli
from gdp_lab.suites import SUITES


def test_list_names_every_suite(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in SUITES)


def test_verify_pass_writes_json(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["verify", "--suite", "hamiltonian", "--out", str(out)]) == 0
    assert all(r["decision"] == "pass" for r in json.loads(out.read_text()))


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("suite: hamiltonian\nseed: 3\nparams:\n  theta: 4.0\n")
    assert cli.main(["verify", "--config", str(cfg), "--param", "beta=0.25"]) == 0
    rec = json.loads(capsys.readouterr().out)[0]
    assert rec["config"]["theta"] == 4.0 and rec["config"]["beta"] == 0.25


@pytest.mark.parametrize("argv,key", [
    (["--param", "theta=-1"], "params.theta"),
    (["--param", "bogus=1"], "bogus"),
    (["--seed", "-2"], "seed"),
])
def test_bad_config_exits_one(argv, key, capsys):
    assert cli.main(["verify", "--suite", "gamma-laplace"] + argv) == 1
    assert key in capsys.readouterr().err


def test_unknown_suite_exits_one(capsys):
    assert cli.main(["verify", "--suite", "nope"]) == 1
    assert "suite" in capsys.readouterr().err


def test_negative_controls_exit_two(tmp_path):
    out = tmp_path / "n.json"
    assert cli.main(["verify", "--suite", "negative-controls", "--replicates", "20000", "--out", str(out)]) == 2


def test_sample_csv(capsys):
    assert cli.main(["sample", "pd", "--param", "theta=1", "--replicates", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("draw,w_0") and lines[0].endswith("tail") and len(lines) == 4


def test_sample_counts_json(capsys):
    argv = ["sample", "coalescent-counts", "--param", "theta=1", "--param", "t=1", "--replicates", "5",
            "--format", "json"]
    assert cli.main(argv) == 0
    assert len(json.loads(capsys.readouterr().out)) == 5


def test_sample_missing_param(capsys):
    assert cli.main(["sample", "gem", "--param", "theta=1"]) == 1
    assert "params.n" in capsys.readouterr().err


def test_eval(capsys):
    assert cli.main(["eval", "e1", "--param", "x=1"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.21938393439552027, rel=1e-14)
