import csv
import json

import numpy as np
import pytest

from odk import cli

SCEN = {p.stem: p for p in cli.shipped_scenarios()}


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_eternal_scenario(tmp_path, capsys):
    assert cli.main(["run", str(SCEN["eternal-nm"]), "--out", str(tmp_path)]) == 0
    head, data = _read_csv(tmp_path / "eternal-nm" / "rates.csv")
    t = data[:, head.index("t")]
    assert np.abs(data[:, head.index("gamma_3")] + np.tanh(t)).max() < 1e-6
    summary = json.loads((tmp_path / "eternal-nm" / "summary.json").read_text())
    assert summary["verdicts"]["cp_divisible"] is False
    assert summary["verdicts"]["p_divisible"] is True
    raw = (tmp_path / "eternal-nm" / "rates.csv").read_bytes()
    assert b"\r\n" not in raw
    head, _ = _read_csv(tmp_path / "eternal-nm" / "divisibility.csv")
    assert head[:4] == ["t", "canonical_gamma_1", "canonical_gamma_2", "canonical_gamma_3"]


def test_violation_scenario_exit_2(tmp_path, capsys):
    assert cli.main(["run", str(SCEN["phase-cov-cpviolation"]), "--out", str(tmp_path)]) == 2
    assert "first violation at t=" in capsys.readouterr().err


def test_malformed_matrix_exit_1(tmp_path, capsys):
    bad = {"name": "bad", "grid": {"t_end": 1.0, "n_steps": 10},
           "source": {"generator": {"H": [[1, 0], [0]], "jumps": [[[0, 1], [0, 0]]], "rates": [1.0]}}, "diagnostics": []}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert cli.main(["run", str(p), "--out", str(tmp_path)]) == 1
    assert "source.generator.H" in capsys.readouterr().err


def test_invalid_json_exit_1(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"name": "x",\n "grid": }')
    assert cli.main(["run", str(p)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_unknown_diagnostic_exit_1(tmp_path):
    sc = json.loads(SCEN["gkls-semigroup"].read_text())
    sc["diagnostics"] = ["nonsense"]
    p = tmp_path / "s.json"
    p.write_text(json.dumps(sc))
    assert cli.main(["run", str(p), "--out", str(tmp_path)]) == 1


def test_deterministic_outputs(tmp_path):
    for k in (1, 2):
        assert cli.main(["run", str(SCEN["kernel-dephasing"]), "--out", str(tmp_path / str(k))]) == 0
    for name in ("trajectory.csv", "divisibility.csv", "summary.json"):
        a = (tmp_path / "1" / "kernel-dephasing" / name).read_bytes()
        b = (tmp_path / "2" / "kernel-dephasing" / name).read_bytes()
        assert a == b


def test_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("ODK_SEED", "99")
    sc = json.loads(SCEN["gkls-semigroup"].read_text())
    code, summary = cli.run_scenario(sc, tmp_path)
    assert code == 0 and summary["seed"] == 99


def _check(tmp_path, capsys, obj):
    p = tmp_path / "obj.json"
    p.write_text(json.dumps(obj))
    code = cli.main(["check", str(p)])
    return code, json.loads(capsys.readouterr().out)


def test_check_transpose(tmp_path, capsys):
    code, out = _check(tmp_path, capsys, {"kind": "map", "transpose": 2})
    assert code == 0 and out["cp"] is False
    assert np.isclose(out["min_choi_eig"], -0.5)


def test_check_gkls_file(tmp_path, capsys):
    sm = [[0, 1], [0, 0]]
    code, out = _check(tmp_path, capsys, {"kind": "generator", "H": [[1, 0], [0, -1]], "jumps": [sm], "rates": [0.5]})
    assert code == 0 and out["gkls"] is True


def test_check_pauli_violation(tmp_path, capsys):
    code, out = _check(tmp_path, capsys, {"kind": "generator", "pauli_rates": [1, -0.5, -0.6]})
    assert code == 0 and out["conditional_positivity_violated"] is True and out["gkls"] is False


def test_parse_matrix_forms():
    a = cli.parse_matrix([[1, 2], [3, 4]], "m")
    b = cli.parse_matrix({"re": [[1, 2], [3, 4]], "im": [[0, 1], [0, 0]]}, "m")
    c = cli.parse_matrix([[[1, 0], [2, 1]], [[3, 0], [4, 0]]], "m")
    assert np.allclose(a, [[1, 2], [3, 4]])
    assert np.allclose(b, c)
    with pytest.raises(cli.ScenarioError):
        cli.parse_matrix([[1, "x"], [0, 1]], "m")


def test_list_models(capsys):
    assert cli.main(["list-models"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    for n in ("pauli", "weyl", "gpc-mub", "phase-covariant", "ad-qubit", "ad-multi", "magnus-qubit", "mix"):
        assert n in names
    assert any(n.startswith("dephasing-") for n in names)
