import csv
import io
import json

import pytest

from socpdual import cases
from socpdual.cli import main
from socpdual.network import dump_network, load_network


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_builtin(capsys):
    code, out, _ = run(capsys, "validate", "builtin:ieee33")
    assert code == 0 and json.loads(out)["branches"] == 32


def test_validate_errors(capsys, tmp_path):
    code, _, err = run(capsys, "validate", str(tmp_path / "missing.json"))
    assert code == 3 and "I/O error" in err
    bad = tmp_path / "bad.json"
    bad.write_text('{"v0": 1, "nodes": [], "branches": [{"child": "1", "parent": "0", "r": -1, "x": 1, "l_max": 1}]}')
    code, _, err = run(capsys, "validate", str(bad))
    assert code == 1 and "error" in err
    code, _, _ = run(capsys, "validate", "builtin:nope")
    assert code == 1


def test_check_and_certify(capsys, tmp_path):
    code, out, _ = run(capsys, "check", "builtin:ieee33")
    assert code == 0 and json.loads(out)["satisfied"] == []
    mod = tmp_path / "m.json"
    code, _, err = run(capsys, "modify", "builtin:ieee33", "--condition", "c3", "-o", str(mod))
    assert code == 0 and "change(s)" in err
    code, out, _ = run(capsys, "certify", str(mod))
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "conditions_met" and doc["certificate"]["valid"]
    code, out, _ = run(capsys, "certify", str(mod), "--condition", "c3")
    assert code == 0 and json.loads(out)["condition"] == "c3"


def test_solve_with_dual(capsys):
    code, out, _ = run(capsys, "solve", "builtin:ieee33", "--dual")
    doc = json.loads(out)
    assert code == 0 and doc["status"] == "optimal"
    assert doc["dual"]["strong_duality"] and doc["physical_residuals"]["max_equality"] < 1e-8


def test_solve_restriction_and_linear_objective(capsys, tmp_path):
    net = tmp_path / "n.json"
    net.write_text(dump_network(cases.chain([1.0, 0.8], box=0.1)))
    w = tmp_path / "w.json"
    w.write_text(json.dumps({"p": {"0": 1.0}}))
    code, out, _ = run(capsys, "solve", str(net), "--program", "socp2", "--objective", f"linear:{w}")
    doc = json.loads(out)
    assert code == 0 and doc["objective"]["kind"] == "linear" and "reform" in doc


def test_solve_failure_exit_code(capsys):
    # fixed loads have no point of the restricted program
    code, out, _ = run(capsys, "solve", "builtin:ieee33", "--program", "socp1")
    assert code == 2 and json.loads(out)["status"] != "optimal"


def test_bad_objective(capsys):
    code, _, _ = run(capsys, "solve", "builtin:ieee33", "--objective", "cost")
    assert code == 1


def test_gap_study_outputs(capsys, tmp_path):
    figs = tmp_path / "figs"
    code, out, err = run(
        capsys, "gap-study", "builtin:ieee33", "--instances", "3", "--seed", "1", "--modify", "c1",
        "--format", "csv", "--jobs", "1", "--figures", str(figs),
    )
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 3 and all(r["strong_duality"] == "true" for r in rows)
    assert "R_SD" in err
    assert (figs / "gap_histogram.png").stat().st_size > 0 and (figs / "gap_profile.png").exists()
    code, out, _ = run(capsys, "gap-study", "builtin:ieee33", "--instances", "2", "--format", "json")
    assert code == 0 and json.loads(out)["summary"]["instances"] == 2
    code, out, _ = run(capsys, "gap-study", "builtin:ieee33", "--instances", "2")
    assert code == 0 and "Avg-G" in out


def test_export_case(capsys, tmp_path):
    code, out, _ = run(capsys, "export-case", "ieee33")
    assert code == 0 and len(json.loads(out)["branches"]) == 32
    code, _, _ = run(capsys, "export-case", "synthetic56", "--csv", str(tmp_path / "s56"))
    assert code == 0 and load_network(tmp_path / "s56").n == 55
    code, out, _ = run(capsys, "validate", str(tmp_path / "s56"), "--net-format", "csv-pair")
    assert code == 0


def test_usage_error_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["modify", "builtin:ieee33"])
    assert exc.value.code != 0
