import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from asymptopt.cli import INPUT_ERROR, OK, PRECONDITION, VERDICT_FAIL, main
from asymptopt.problems import BUNDLED, ProblemError, RunConfig, load_bundled, parse_problem

pytestmark = pytest.mark.filterwarnings("ignore:quasiconvex stability precondition")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_bundled_round_trip():
    for name in BUNDLED:
        spec = load_bundled(name)
        again = parse_problem(json.loads(json.dumps(spec.to_json())))
        assert again.to_json() == spec.to_json()


def test_example_31_has_three_pieces():
    spec = load_bundled("example-3.1")
    assert spec.m == 2 and len(spec.feasible().pieces) == 3


def test_schema_and_dimension_errors():
    base = load_bundled("example-4.2").to_json()
    bad = dict(base, m=0)
    with pytest.raises(ProblemError, match="schema error at /m"):
        parse_problem(bad)
    bad = dict(base, objectives=[{"op": "affine", "a": [1.0, 2.0]}, base["objectives"][1]])
    with pytest.raises(ProblemError, match="Dimension"):
        parse_problem(bad)
    improper = dict(base, objectives=[{"op": "scale", "k": -1, "arg": {"op": "indicator", "A": [[1]], "b": [0]}},
                                      base["objectives"][1]])
    with pytest.raises(ProblemError, match="Improper"):
        parse_problem(improper)
    with pytest.raises(ProblemError):
        parse_problem("no-such-problem")


def test_run_config_validation():
    cfg = RunConfig.from_dict({"grid": {"box": [[-1, 1]], "h": 0.1}, "sweep": {"radii": [0.2, 0.1]}, "seed": 3})
    assert cfg.radii == (0.2, 0.1) and cfg.asym.seed == 3
    with pytest.raises(ProblemError):
        RunConfig.from_dict({"grid": {"h": -1}})
    with pytest.raises(ProblemError):
        RunConfig.from_dict({"unknown": 1})
    with pytest.raises(ProblemError):
        RunConfig.from_dict({"grid": {"box": [[-1, 1], [-1, 1]], "h": 0.1}}).grid_for(load_bundled("example-4.2"))


def test_input_error_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["solve", "--problem", str(p), "--out", str(tmp_path / "o")]) == INPUT_ERROR
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": {"h": 0}}))
    assert main(["solve", "--problem", "example-4.2", "--config", str(cfg), "--out", str(tmp_path / "o")]) == INPUT_ERROR


def test_check_existence_exit_codes(tmp_path):
    assert main(["check-existence", "--problem", "example-4.2", "--out", str(tmp_path / "a")]) == OK
    assert main(["check-existence", "--problem", "example-4.1", "--out", str(tmp_path / "b")]) == VERDICT_FAIL
    rep = json.loads((tmp_path / "b" / "existence.json").read_text())
    assert rep["condition"]["holds"] is False
    assert rep["condition"]["witness"] == {"direction": [1.0], "index": 1, "margin": 0.0}
    assert rep["epsilon_estimate"]["epsilon"] is None


def test_asym_table_sqrt_abs(tmp_path):
    assert main(["asym", "--problem", "sqrt-abs", "--out", str(tmp_path)]) == OK
    rows = read_csv(tmp_path / "asym.csv")
    table = {(r["direction"], r["variant"]): r["value"] for r in rows}
    for d in ("1.0", "-1.0"):
        assert abs(float(table[(d, "plain")])) <= 1e-6
        assert table[(d, "q")] == "inf"
        assert 0 < float(table[(d, "lambda=1.0")]) <= 2 + 1e-3


def test_all_example_42(tmp_path):
    assert main(["all", "--problem", "example-4.2", "--out", str(tmp_path)]) == OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary["exit_codes"].values()) == {OK}
    W = np.array([[float(r["x1"])] for r in read_csv(tmp_path / "sol_w.csv")])
    assert W.min() == -1.0 and W.max() == 0.0
    stab = json.loads((tmp_path / "stability.json").read_text())
    assert all(v["status"] == "pass" for v in stab["verdicts"].values())
    assert stab["closed_form_ok"] is False           # stated interval; see the strict xfail in the acceptance suite
    for name in ("fronts.png", "psi.png", "stability.png", "sharp.json", "psi.csv", "scalarizations.csv"):
        assert (tmp_path / name).is_file()
    assert len(list((tmp_path / "stability").glob("*.csv"))) == 41


def test_no_plots_flag(tmp_path):
    assert main(["solve", "--problem", "example-4.2", "--out", str(tmp_path), "--no-plots"]) == OK
    assert not (tmp_path / "fronts.png").exists()


def test_precondition_exit_codes(tmp_path):
    assert main(["sharp", "--problem", "example-4.1", "--out", str(tmp_path / "a")]) == PRECONDITION
    assert main(["stability", "--problem", "sqrt-abs", "--out", str(tmp_path / "b")]) == PRECONDITION
    rep = json.loads((tmp_path / "b" / "stability.json").read_text())
    assert rep["precondition_warnings"] and rep["condition_q"]["holds"] is True


def test_stability_failure_exit_code(tmp_path):
    # Example 3.1: a perturbation u = -eps (1, 1) removes the top segment from the weak front
    assert main(["stability", "--problem", "example-3.1", "--out", str(tmp_path)]) == VERDICT_FAIL
    rep = json.loads((tmp_path / "stability.json").read_text())
    assert rep["verdicts"]["lsc"]["status"] == "fail" and rep["verdicts"]["lsc"]["witness"]


def test_json_output_has_no_nan_or_infinity_tokens(tmp_path):
    main(["all", "--problem", "example-4.1", "--out", str(tmp_path), "--no-plots"])
    for p in tmp_path.glob("*.json"):
        text = p.read_text()
        assert "NaN" not in text and "Infinity" not in text
        json.loads(text)


@pytest.mark.parametrize("name", ["example-4.2", "example-3.1"])
def test_all_is_byte_identical(tmp_path, monkeypatch, name):
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("ASYMPTOPT_THREADS", "1")
    main(["all", "--problem", name, "--out", str(a)])
    monkeypatch.setenv("ASYMPTOPT_THREADS", "4")
    main(["all", "--problem", name, "--out", str(b)])
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert ta.keys() == tb.keys()
    assert [k for k in ta if ta[k] != tb[k]] == []


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "asymptopt", "check-existence", "--problem", "example-4.1",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == VERDICT_FAIL
    assert "fails" in res.stdout
