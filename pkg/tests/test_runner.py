import json
from pathlib import Path

import pytest

from schubertwalk import cli, runner

LYAP = {"experiment": "lyapunov", "preset": "sl2z", "n": 200, "trials": 400, "master_seed": 7}
TORUS = {"experiment": "torus-dichotomy", "preset": "sl2z", "x0": "1/3,1/3", "t": 0.5, "horizons": [0, 5, 10]}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_lyapunov_run_writes_artifacts(tmp_path):
    m = runner.run(LYAP, out=tmp_path / "a")
    assert {p.name for p in (tmp_path / "a").iterdir()} == {"summary.json", "profile.csv", "manifest.json"}
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["proximal_dimension"] == 1
    assert m["config"]["parameters"]["trials"] == 400
    assert m["config"]["master_seed"] == 7


def test_identical_rerun_and_thread_independence(tmp_path):
    a = runner.run(LYAP, out=tmp_path / "a", threads=1)
    b = runner.run(LYAP, out=tmp_path / "b", threads=3)
    assert a["summary_sha256"] == b["summary_sha256"]
    assert a["csv_sha256"] == b["csv_sha256"]
    assert (tmp_path / "a" / "profile.csv").read_bytes() == (tmp_path / "b" / "profile.csv").read_bytes()


def test_seed_override_changes_result(tmp_path):
    a = runner.run(LYAP, out=tmp_path / "a")
    b = runner.run(LYAP, out=tmp_path / "b", seed=8)
    assert a["summary_sha256"] != b["summary_sha256"]
    assert b["config"]["master_seed"] == 8


def test_parameters_block_equivalent(tmp_path):
    nested = {"experiment": "lyapunov", "preset": "sl2z", "master_seed": 7, "parameters": {"n": 200, "trials": 400}}
    assert runner.config_key(runner.resolve(nested)) == runner.config_key(runner.resolve(LYAP))


def test_torus_persistence_run(tmp_path):
    runner.run(TORUS, out=tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert [3, 0] in summary["persistent_frequencies"]
    assert (tmp_path / "fourier.csv").read_text().startswith("n,a1,a2,re,im,abs,stderr\n")


# --- validation ------------------------------------------------------------

@pytest.mark.parametrize("bad,fragment", [
    ({**LYAP, "trials": 0}, "trials"),
    ({**LYAP, "colour": "red"}, "colour"),
    ({**LYAP, "experiment": "nope"}, "experiment"),
    ({"experiment": "lyapunov"}, "exactly one"),
    ({**LYAP, "preset": "sl3z"}, "slc2-in-sl4"),
    ({**LYAP, "parameters": {"bogus": 1}}, "bogus"),
    ({"experiment": "deviation-i", "preset": "sl2z", "n": 10, "l_values": [20]}, "l <= n"),
    ({"experiment": "torus-dichotomy", "preset": "sl2z", "x0": "1/1009,1/1009"}, "\"mode\": \"empirical\""),
    ({"experiment": "torus-dichotomy", "preset": "sl2z", "x0": "sqrt:2,3", "t": 0.1, "trials": 500}, "trials"),
])
def test_validate_rejects(bad, fragment):
    errors = runner.validate(bad)
    assert errors and any(fragment in e for e in errors)


def test_validate_accepts_inline_measure():
    cfg = {"experiment": "lyapunov", "measure": {"dim": 2, "atoms": [{"matrix": [[2, 0], [0, 1]], "weight": 1.0}]}}
    assert runner.validate(cfg) == []
    assert runner.validate({"experiment": "invertibility-sweep", "tuples": 10}) == []


def test_list_presets():
    text = runner.list_presets()
    assert "slc2-in-sl4" in text and "so1-7-ext2" in text


def test_schema_shipped_in_docs():
    doc = Path(__file__).resolve().parents[1] / "docs" / "config.schema.json"
    assert json.loads(doc.read_text()) == runner.schema()


# --- regression file ------------------------------------------------------------

def test_pin_then_check(tmp_path):
    expected = tmp_path / "expected.json"
    entry = runner.pin("lyap", LYAP, ["sum_lambda", "profile.lambda", "proximal_dimension"], "test",
                       tol=1e-12, csv_checksums=True, out=tmp_path / "pin", path=expected)
    assert entry["oracle"]["seed"] == 7 and entry["oracle"]["command"] == "test"
    ok = runner.run(LYAP, out=tmp_path / "c", check=True, expected_path=expected, threads=2)
    assert ok["check"]["passed"] and ok["check"]["entry"] == "lyap"
    with pytest.raises(runner.CheckFailure, match="no expected-results entry"):
        runner.run(LYAP, seed=9, out=tmp_path / "d", check=True, expected_path=expected)


def test_check_detects_drift(tmp_path):
    expected = tmp_path / "expected.json"
    runner.pin("lyap", LYAP, ["profile.lambda.0"], "test", out=tmp_path / "pin", path=expected)
    data = json.loads(expected.read_text())
    data["entries"]["lyap"]["values"]["profile.lambda.0"]["value"] += 0.01
    expected.write_text(json.dumps(data))
    with pytest.raises(runner.CheckFailure, match="profile.lambda.0"):
        runner.run(LYAP, out=tmp_path / "c", check=True, expected_path=expected)


def test_shipped_expected_results_are_tagged():
    data = runner.load_expected()
    assert data["entries"], "expected-results file is empty"
    for name, entry in data["entries"].items():
        assert set(entry["oracle"]) >= {"seed", "date", "command", "engine_version"}, name
        assert entry["config_key"] == runner.config_key(entry["config"]), name


# --- command line ---------------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["list-presets"]) == 0
    assert "sl2z" in capsys.readouterr().out
    assert cli.main(["validate", "--config", write(tmp_path, LYAP)]) == 0
    assert cli.main(["validate", "--config", write(tmp_path, {**LYAP, "trials": 0}, "bad.json")]) == 2
    assert cli.main(["run", "--config", write(tmp_path, {**LYAP, "trials": 0}, "bad.json")]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    cfg = write(tmp_path, {**LYAP, "trials": 20})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    # no pinned entry for this config: check failure
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--check"]) == 1


def test_cli_schema(capsys):
    assert cli.main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out)["title"] == "experiment config"
