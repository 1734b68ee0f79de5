import csv
import json
import subprocess
import sys

import pytest

from weakmorse.cli import _clean, dumps, load_schema, main
import jsonschema

MINIMIZER = {
    "system": {"d": 3, "masses": [1.0, 1.0, 1.0], "alpha": 1.0},
    "qa": [[-1.0, -0.5, 0.0], [1.0, -0.5, 0.0], [0.0, 1.0, 0.0]],
    "qb": [[0.1, -1.0, 0.1], [0.6, 1.0, 0.0], [-0.7, 0.0, -0.1]],
    "t1": 0.0, "t2": 3.0, "M": 32, "grid": "uniform",
    "eps_schedule": [0.1, 0.01, 0.001, 0.0001],
    "seed_strategy": "minimize",
}


def write_config(tmp_path, cfg, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def summary(out):
    with open(out / "summary.json") as fh:
        return json.load(fh)


def test_check_passes_and_fault_fails(tmp_path):
    assert main(["check", "--out", str(tmp_path / "a")]) == 0
    s = summary(tmp_path / "a")
    jsonschema.validate(s, load_schema("summary.json"))
    assert s["passed"] and s["exit_code"] == 0
    assert main(["check", "--out", str(tmp_path / "b"), "--fault-inject", "corrupt-gradient"]) == 1
    failed = [c["name"] for c in summary(tmp_path / "b")["results"]["checks"] if not c["passed"]]
    assert "gradient_fd" in failed


@pytest.mark.parametrize("argv", [
    ["nonsense"],
    ["check", "--seed", "abc"],
    ["check", "--fault-inject", "no-such-fault"],
    ["check", "--workers", "0"],
])
def test_usage_errors(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "nonsense" else argv) == 2


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["check", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    missing = {k: v for k, v in MINIMIZER.items() if k != "system"}
    assert main(["continuation", "--config", write_config(tmp_path, missing),
                 "--out", str(tmp_path / "o")]) == 2
    empty = dict(MINIMIZER, eps_schedule=[])
    assert main(["continuation", "--config", write_config(tmp_path, empty),
                 "--out", str(tmp_path / "o")]) == 2
    mesh = {"alphas": [1.0], "lambdas": [0.0], "mesh": 1}
    assert main(["limit-sweep", "--config", write_config(tmp_path, mesh),
                 "--out", str(tmp_path / "o")]) == 2


def test_environment_and_flag_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("WEAKMORSE_SEED", "7")
    monkeypatch.setenv("WEAKMORSE_OUT", str(tmp_path / "env"))
    assert main(["check"]) == 0
    assert summary(tmp_path / "env")["seed"] == 7
    assert main(["check", "--seed", "9", "--out", str(tmp_path / "flag")]) == 0
    assert summary(tmp_path / "flag")["seed"] == 9


@pytest.fixture(scope="module")
def minimizer_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = write_config(base, MINIMIZER)
    codes = [main(["continuation", "--config", cfg, "--out", str(base / name)])
             for name in ("r1", "r2")]
    return base, codes


def test_minimizer_continuation_has_zero_bound(minimizer_runs):
    base, codes = minimizer_runs
    assert codes == [0, 0]
    s = summary(base / "r1")
    assert s["results"]["index_bound"]["B"] == 0
    assert s["results"]["events"] == []
    assert s["results"]["sequence"]["index_liminf"] == 0


def test_outputs_are_deterministic_and_valid(minimizer_runs):
    base, _ = minimizer_runs
    a, b = summary(base / "r1"), summary(base / "r2")
    a.pop("created"), b.pop("created")
    assert a == b
    for name in ("sequence.json", "records/record_000.json", "series.csv"):
        assert (base / "r1" / name).read_text() == (base / "r2" / name).read_text()
    seq = json.loads((base / "r1" / "sequence.json").read_text())
    jsonschema.validate(seq, load_schema("sequence.json"))
    rec = json.loads((base / "r1" / "records" / "record_003.json").read_text())
    jsonschema.validate(rec, load_schema("record.json"))
    with open(base / "r1" / "series.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 * 3


def test_blowup_without_collisions_fails(minimizer_runs):
    base, _ = minimizer_runs
    cfg = write_config(base, {"sequence": str(base / "r1" / "sequence.json")}, "blow.json")
    assert main(["blowup", "--config", cfg, "--out", str(base / "blow")]) == 1


def test_blowup_missing_sequence_is_usage_error(tmp_path):
    assert main(["blowup", "--out", str(tmp_path / "blowup")]) == 2


def test_break_solver_fault(tmp_path):
    cfg = write_config(tmp_path, MINIMIZER)
    assert main(["continuation", "--config", cfg, "--out", str(tmp_path / "o"),
                 "--fault-inject", "break-solver"]) == 1
    assert not summary(tmp_path / "o")["passed"]


@pytest.fixture(scope="module")
def flagship_file(flagship, tmp_path_factory):
    base = tmp_path_factory.mktemp("flag")
    (base / "continuation").mkdir()
    (base / "continuation" / "sequence.json").write_text(dumps(flagship.to_dict()))
    return base


def test_blowup_on_flagship(flagship_file):
    out = flagship_file / "blowup"
    assert main(["blowup", "--out", str(out)]) == 0
    s = summary(out)
    entry = s["results"]["blowups"][0]
    assert entry["directions"]["angle"] <= 1e-2
    assert entry["quadform"]["rel_diff"][-1] <= 0.05
    assert len(list((out / "profiles").glob("event0_n*.csv"))) == 4
    assert (out / "quadform_event0.csv").exists()


def test_blowup_case_mismatch(flagship_file, tmp_path):
    cfg = write_config(tmp_path, {"sequence": str(flagship_file / "continuation" / "sequence.json"),
                                  "case": "infinite_lambda"})
    assert main(["blowup", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "CaseMismatch" in summary(tmp_path / "o")["message"]


def test_single_point_sweep(tmp_path):
    cfg = write_config(tmp_path, {"alphas": [1.0], "lambdas": [0.0]})
    assert main(["limit-sweep", "--config", cfg, "--out", str(tmp_path)]) == 0
    with open(tmp_path / "sweep.csv") as fh:
        (row,) = list(csv.DictReader(fh))
    assert abs(float(row["numeric_angle"]) - float(row["theory_angle"])) <= 1e-3
    assert row["transverse_count"] == "1" and row["converged"] == "True"


def test_clean_handles_non_finite():
    assert _clean({"a": float("inf"), "b": [float("nan")]}) == {"a": "inf", "b": ["nan"]}


def test_module_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "weakmorse", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0
    assert "continuation" in r.stdout and "fault" not in r.stdout
