import csv
import json
import subprocess
import sys

import pytest

from heatvp import cli
from heatvp.config import bundled_config, load_problem
from heatvp.quadrature import QuadratureError
from heatvp.solver import SolverError


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = cli.main([*args, "--out", str(out)])
    return code, out


def write(tmp_path, doc, name="p.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


SMALL = {
    "version": 1,
    "seed": 3,
    "checks": [
        {"id": "lemma43", "domain": {"kind": "ball", "center": [0, 0], "radius": 1}, "density": {"family": "zero"}, "samples": 3},
        {
            "id": "x0-independence",
            "domain": {"kind": "box", "lower": [0, 0], "upper": [1, 1], "T": 1.0},
            "density": {"family": "bump", "params": {"t_terms": [[1.0, 2.0]]}},
            "samples": 2,
            "t_range": [0.2, 0.9],
            "x0": [[0.5, 0.5], [0.2, 0.7]],
        },
        {"id": "bound31", "dims": [1], "count": 2000},
    ],
}


def test_lemma43_zero_config(tmp_path):
    code, out = run(tmp_path, "verify", "--config", str(bundled_config("lemma43_zero.json")))
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert [c["id"] for c in doc["checks"]] == ["lemma43"]
    assert doc["checks"][0]["max_discrepancy"] == 0.0
    rows = list(csv.reader((out / "summary.csv").read_text().splitlines()))
    assert rows[1][:2] == ["lemma43", "True"]


def test_ablation_config_fails_by_design(tmp_path, capsys):
    code, out = run(tmp_path, "verify", "--config", str(bundled_config("lemma31_renorm_2d.json")))
    assert code == 1
    doc = json.loads((out / "report.json").read_text())
    by_id = {c["id"]: c for c in doc["checks"]}
    assert by_id["lemma31"]["passed"]
    ab = by_id["lemma31-no-renorm"]
    assert ab["negative_control"] and ab["max_discrepancy"] > 10 * ab["tolerance"]
    assert "lemma31-no-renorm: FAIL" in capsys.readouterr().out


def test_tol_scale_changes_outcome(tmp_path):
    code, out = run(tmp_path, "verify", "--config", str(bundled_config("lemma31_renorm_2d.json")), "--tol-scale", "1000")
    assert code == 0
    doc = json.loads((out / "report.json").read_text())
    assert all(c["tolerance"] == pytest.approx(1.0) for c in doc["checks"])


def test_solve_zero_coarse_and_default(tmp_path):
    code, out = run(tmp_path, "solve", "--config", str(bundled_config("solve_zero.json")))
    assert code == 0
    rows = list(csv.reader((out / "solution.csv").read_text().splitlines()))
    assert rows[0] == ["t", "x1", "value"]
    assert all(float(r[-1]) == 0.0 for r in rows[1:])
    code, out2 = run(tmp_path / "c", "solve", "--config", str(bundled_config("solve_coarse.json")))
    assert code == 0
    diag = json.loads((out2 / "diagnostics.json").read_text())
    assert diag["passed"] and diag["case"] == "dirichlet-1d-sine"
    code, out3 = run(tmp_path / "f", "solve")
    assert code == 0
    fine = json.loads((out3 / "diagnostics.json").read_text())
    assert fine["max_error_vs_exact"] <= 1e-3
    assert diag["max_error_vs_exact"] > fine["max_error_vs_exact"]


def test_solve_threshold_failure(tmp_path):
    doc = {"version": 1, "solve": {"case": "dirichlet-1d-sine", "lattice": {"nx": 11, "nt": 21}, "max_error_vs_exact": 1e-8}}
    code, out = run(tmp_path, "solve", "--config", write(tmp_path, doc))
    assert code == 1
    assert json.loads((out / "diagnostics.json").read_text())["passed"] is False


def test_convergence_default(tmp_path):
    code, out = run(tmp_path, "convergence")
    assert code == 0
    rows = list(csv.DictReader((out / "rates.csv").read_text().splitlines()))
    zero = [r for r in rows if r["study"] == "zero-density"]
    assert zero and all(float(r["error"]) == 0.0 for r in zero)
    assert {r["study"] for r in rows} == {"newtonian-ball-center", "zero-density", "b-operator"}


def test_convergence_closed_form_only_for_ball(tmp_path):
    doc = {
        "version": 1,
        "convergence": [
            {"name": "x", "target": "newtonian", "domain": {"kind": "box", "lower": [0, 0], "upper": [1, 1]}, "density": {"family": "constant"}, "x": [0.5, 0.5], "reference": "closed-form"}
        ],
    }
    code, _ = run(tmp_path, "convergence", "--config", write(tmp_path, doc))
    assert code == 2


def test_bounds_outputs(tmp_path):
    doc = {"version": 1, "bounds": {"dims": [1, 2], "count": 2000}}
    code, out = run(tmp_path, "bounds", "--config", write(tmp_path, doc))
    assert code == 0
    rows = list(csv.DictReader((out / "bounds.csv").read_text().splitlines()))
    assert {r["n"] for r in rows} == {"1", "2"}


@pytest.mark.parametrize(
    "doc",
    [
        {"version": 1, "checks": [{"id": "lemma43", "domain": {"kind": "ball", "center": [0, 0], "radius": 1}, "density": {"family": "zero"}, "colour": "red"}]},
        {"version": 2, "checks": []},
        {"version": 1, "checks": [{"id": "lemma99"}]},
        {"version": 1, "checks": [{"id": "lemma43", "domain": {"kind": "ball", "center": [0, 0], "radius": -1}, "density": {"family": "zero"}}]},
        {"version": 1, "checks": [{"id": "lemma43", "domain": {"kind": "ball", "center": [0, 0], "radius": 1}, "density": {"family": "nope"}}]},
        {"version": 1, "solve": {"case": "dirichlet-1d-sine", "lattice": {"nx": 5, "nt": 21}}},
        {"version": 1},
    ],
)
def test_config_errors_exit_2(tmp_path, doc):
    cmd = "solve" if "solve" in doc else "verify"
    code, _ = run(tmp_path, cmd, "--config", write(tmp_path, doc))
    assert code == 2


def test_unreadable_config_and_bad_flags(tmp_path):
    assert run(tmp_path, "verify", "--config", str(tmp_path / "missing.json"))[0] == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert run(tmp_path, "verify", "--config", str(tmp_path / "broken.json"))[0] == 2
    assert run(tmp_path, "verify", "--jobs", "0")[0] == 2
    assert run(tmp_path, "verify", "--tol-scale", "-1")[0] == 2


def test_numerical_errors_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SolverError("singular matrix")

    monkeypatch.setattr(cli, "solve", boom)
    assert run(tmp_path, "solve", "--config", str(bundled_config("solve_zero.json")))[0] == 3

    def nan(*a, **k):
        raise QuadratureError("non-finite sum")

    monkeypatch.setattr(cli, "run_check", nan)
    assert run(tmp_path, "verify", "--config", write(tmp_path, SMALL))[0] == 3


def test_determinism_across_runs_and_jobs(tmp_path):
    cfg = write(tmp_path, SMALL)
    _, a = run(tmp_path / "a", "verify", "--config", cfg)
    _, b = run(tmp_path / "b", "verify", "--config", cfg)
    code, c = run(tmp_path / "c", "verify", "--config", cfg, "--jobs", "2")
    assert code == 0
    for name in ("report.json", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()


def test_seed_override(tmp_path):
    cfg = write(tmp_path, SMALL)
    _, a = run(tmp_path / "a", "verify", "--config", cfg)
    _, b = run(tmp_path / "b", "verify", "--config", cfg, "--seed", "11")
    da = json.loads((a / "report.json").read_text())
    db = json.loads((b / "report.json").read_text())
    assert da["meta"]["seed"] == 3 and db["meta"]["seed"] == 11
    assert da["checks"][0]["details"] != db["checks"][0]["details"]


def test_bundled_configs_validate():
    for name in ("verify_default", "lemma31_renorm_2d", "lemma43_zero", "solve_default", "solve_neumann", "solve_coarse", "solve_zero", "convergence_default", "bounds_default"):
        assert load_problem(bundled_config(name + ".json")).version == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "heatvp", "verify", "--config", str(bundled_config("lemma43_zero.json")), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("lemma43: PASS")
