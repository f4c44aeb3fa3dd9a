import csv
import io
import json
import math

import pytest

from spherelab.cli import RunConfig, UsageError, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    header = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            header[key] = value
        else:
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    return header, rows


def test_solve_sinh(capsys):
    code, out, _ = run(capsys, "solve", "--tau", "0", "--formulation", "x", "--t-max", "3")
    assert code == 0
    header, rows = parse_csv(out)
    assert header["formulation"] == "x" and header["version"]
    assert header["tau"] == "0.0" and header["rel_tol"] == "1e-10"
    assert max(abs(float(r["x"]) - math.sinh(float(r["t"]))) for r in rows) <= 1e-8


def test_solve_outside_window(capsys):
    code, _, err = run(capsys, "solve", "--tau", "0.9", "--formulation", "x")
    assert code == 2
    assert "existence window" in err


def test_solve_g_first_row(capsys):
    code, out, _ = run(capsys, "solve", "--tau", "0.3", "--formulation", "g")
    assert code == 0
    _, rows = parse_csv(out)
    assert float(rows[0]["s"]) == 1.0 and float(rows[0]["g"]) == 0.0


def test_solve_u_json(capsys):
    code, out, _ = run(capsys, "solve", "--tau", "0", "--formulation", "u", "--format", "json",
                       "--points", "5", "--r-min", "0.5", "--r-max", "2")
    assert code == 0
    data = json.loads(out)
    for r, u, *_ in data["rows"]:
        assert u == pytest.approx(0.5 * (r - 1 / r), abs=1e-9)


def test_seventeen_digits(capsys):
    _, out, _ = run(capsys, "solve", "--tau", "0.3", "--points", "3", "--t-max", "1")
    _, rows = parse_csv(out)
    assert float(rows[-1]["x"]) == pytest.approx(1.2945353298841673, abs=1e-10)
    assert len(rows[-1]["x"].replace(".", "").lstrip("0")) >= 16


def test_bad_usage(capsys):
    assert run(capsys, "solve", "--tau", "0.1", "--points", "1")[0] == 2
    assert run(capsys, "solve", "--tau", "0.1", "--rel-tol", "-1")[0] == 2
    with pytest.raises(SystemExit) as info:
        main(["solve", "--no-such-flag"])
    assert info.value.code == 2


def test_find_t_bad_bracket(capsys):
    code, _, err = run(capsys, "find-t", "--bracket", "-0.5", "0")
    assert code == 4
    assert "BadBracket" in err


def test_find_t_fine(capsys):
    code, out, _ = run(capsys, "find-t", "--tol", "1e-5")
    assert code == 0
    data = json.loads(out)
    assert data["bracket_width"] <= 1e-5
    assert data["t_estimate"] == pytest.approx(0.57735, abs=5e-4)


def test_portrait_csv(capsys):
    code, out, _ = run(capsys, "portrait", "--n", "3", "--q-range", "0", "1", "--p-range", "0", "1")
    assert code == 0
    _, rows = parse_csv(out)
    assert len(rows) == 9
    node = next(r for r in rows if float(r["q"]) == 1.0 and float(r["p"]) == 0.0)
    assert float(node["q_dot"]) == 0.0 and float(node["p_dot"]) == 0.0


def test_portrait_json_lists_equilibria(capsys):
    code, out, _ = run(capsys, "portrait", "--format", "json", "--n", "2")
    assert code == 0
    kinds = sorted(e["kind"] for e in json.loads(out)["equilibria"])
    assert kinds == ["Saddle", "Saddle", "StableNode", "StableNode"]


def test_verify_curvature_round_sphere(capsys):
    code, out, _ = run(capsys, "verify", "curvature", "--tau", "0")
    assert code == 0
    report = json.loads(out)
    anchor = next(c for c in report["checks"] if c["check"] == "curvature_round_sphere")
    assert anchor["pass"] and anchor["max_residual"] <= 1e-6
    assert set(anchor) >= {"check", "n_samples", "max_residual", "tolerance", "pass"}


def test_verify_bracket_seeded(capsys):
    code, out, _ = run(capsys, "verify", "bracket", "--tau", "0.3", "--samples", "100", "--seed", "7")
    assert code == 0
    report = json.loads(out)
    assert report["pass"]
    assert all(c["tolerance"] == 1e-9 and c["n_samples"] == 100 for c in report["checks"])


def test_verify_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run(capsys, "verify", "bracket", "--tau", "0.1", "--seed", "3", "-o", str(path))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    # atomic writes leave no temporary files behind
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.json", "b.json"]


def test_verify_all_passes(capsys):
    code, out, _ = run(capsys, "verify", "all", "--tau", "0.3")
    assert code == 0, out
    names = {c["check"] for c in json.loads(out)["checks"]}
    assert {"bracket_FH", "conservation_F", "curvature_vs_finite_difference",
            "consistency_tau+", "poles_potential_decay"} <= names


def test_verify_corrupted_jet_fails(tmp_path, capsys):
    path = tmp_path / "report.json"
    code, _, _ = run(capsys, "verify", "all", "--tau", "0.3", "--corrupt-jet", "-o", str(path))
    assert code == 5
    report = json.loads(path.read_text())
    assert report["pass"] is False


def test_report(capsys):
    code, out, _ = run(capsys, "report", "--tau", "0.3")
    assert code == 0
    data = json.loads(out)
    assert data["x_at_1"] == pytest.approx(1.2945353298841673, abs=1e-10)
    assert data["poles"]["zeta0"] != 0


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"tau": 0.0, "format": "json"}))
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--points", "3", "--t-max", "1")
    assert code == 0
    assert json.loads(out)["config"]["tau"] == "0.0"
    cfg.write_text(json.dumps({"tau": 0.0, "colour": "red"}))
    code, _, err = run(capsys, "solve", "--config", str(cfg))
    assert code == 2 and "colour" in err


def test_run_config_validation():
    with pytest.raises(UsageError):
        RunConfig(format="xml")
    with pytest.raises(UsageError):
        RunConfig.from_mapping({"tau": 0.1, "extra": 1})
