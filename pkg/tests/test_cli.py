import csv
import json
import math

import numpy as np
import pytest

from sal.cli import EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC, EXIT_OK, main, resolve_seed
from sal.verify import SUITES


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def last_json(out):
    return json.loads(out.strip().splitlines()[-1])


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def write_config(tmp_path, **cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for name in ("simulate", "reduced", "stability", "threshold", "verify", "experiment"):
        assert name in out


def test_simulate_outputs(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        V={"diag": [1.0, 0.0]},
        beta=1.0,
        initial={"states": [[math.sqrt(0.5), math.sqrt(0.5)]] * 3},
    )
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--t-end", 1, "--dt", 0.01, "--out", tmp_path / "o")
    assert code == EXIT_OK
    rep = last_json(out)
    assert rep["final_masses"][0] == pytest.approx(0.880797, abs=1e-6)
    rows = read_csv(tmp_path / "o" / "observables.csv")
    assert set(rows[0]) == {"t", "rho_min", "rho_max", "rho_abs", "m_1", "m_2"}
    assert (tmp_path / "o" / "trajectory.csv").exists() and (tmp_path / "o" / "energy.csv").exists()
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["n"] == 3


def test_simulate_zero_time(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--t-end", 0, "--out", tmp_path)
    assert code == EXIT_OK
    assert last_json(out)["snapshots"] == 1
    assert len(read_csv(tmp_path / "energy.csv")) == 1


def test_simulate_from_csv_file(tmp_path, capsys):
    states = tmp_path / "x0.csv"
    states.write_text("x_1,x_2\n1,0\n0,1\n")
    cfg = write_config(tmp_path, V={"diag": [2.0, 1.0]}, beta=1.0, initial={"file": str(states)})
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--t-end", 0.5, "--out", tmp_path / "o")
    assert code == EXIT_OK and last_json(out)["n"] == 2


def test_asymmetric_V_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, V=[[1.0, 0.5], [0.2, 1.0]], beta=1.0, n=3)
    code, _, err = run(capsys, "simulate", "--config", cfg, "--out", tmp_path)
    assert code == EXIT_INVALID
    assert "symmetric" in err and "V[0,1]=0.5" in err


def test_invalid_inputs_exit_2(tmp_path, capsys):
    assert run(capsys, "simulate", "--config", tmp_path / "missing.json")[0] == EXIT_INVALID
    assert run(capsys, "simulate", "--dt", 0, "--out", tmp_path)[0] == EXIT_INVALID
    assert run(capsys, "simulate", "--beta", -1, "--out", tmp_path)[0] == EXIT_INVALID
    assert run(capsys, "threshold", "--lambda-p", 1, "--r", 0, "--out", tmp_path / "t.csv")[0] == EXIT_INVALID
    assert run(capsys, "reduced", "--lambdas", "1,0", "--p0", "0.5,0.6")[0] == EXIT_INVALID
    assert run(capsys, "reduced", "--kind", "bipolar", "--lambdas", "1,0", "--p0", "0.5,0.5")[0] == EXIT_INVALID


def test_numeric_failure_exit_3(tmp_path, capsys):
    cfg = write_config(tmp_path, V={"diag": [1e200, 1.0]}, beta=1.0, initial={"states": [[0.6, 0.8], [0.8, -0.6]]})
    with np.errstate(all="ignore"):
        code, _, err = run(capsys, "simulate", "--config", cfg, "--t-end", 1, "--dt", 0.1, "--out", tmp_path)
    assert code == EXIT_NUMERIC and "t=" in err


def test_reduced_consensus(tmp_path, capsys):
    code, out, _ = run(
        capsys, "reduced", "--lambdas", "1,0", "--p0", "0.5,0.5", "--t-end", 1, "--dt", 0.01, "--out", tmp_path
    )
    assert code == EXIT_OK
    rep = last_json(out)
    assert rep["final_p"][0] == pytest.approx(math.exp(2) / (math.exp(2) + 1), abs=1e-8)
    assert rep["closed_form_max_diff"] < 1e-8
    assert list(read_csv(tmp_path / "reduced.csv")[0]) == ["t", "p_1", "p_2", "M"]


def test_reduced_bipolar(tmp_path, capsys):
    code, out, _ = run(
        capsys, "reduced", "--kind", "bipolar", "--lambdas", "2,1,-1", "--p0", "0.3,0.4,0.3",
        "--beta", 1, "--t-end", 50, "--out", tmp_path,
    )
    assert code == EXIT_OK
    rep = last_json(out)
    assert rep["predicted_M_limit"] == pytest.approx(2.0) and rep["distance_to_limit"] < 1e-6


def test_stability_sign_split(tmp_path, capsys):
    code, out, _ = run(capsys, "stability", "--lambdas", "1,0.2", "--beta", 1, "--pattern", "+-")
    assert code == EXIT_OK
    rep = last_json(out)
    assert rep["verdict"] == "stable" and rep["gamma_plus"] == pytest.approx(math.tanh(1.0), abs=1e-15)
    assert rep["sigma"] == pytest.approx(0.761594, abs=1e-6)
    # n (d - 1) transverse eigenvalues
    assert len(rep["spectrum"]) == 2


def test_stability_homogeneous_and_mode(capsys):
    code, out, _ = run(capsys, "stability", "--kind", "homogeneous", "--lambdas", "2,1")
    assert code == EXIT_OK and last_json(out)["verdict"] == "stable"
    code, out, _ = run(capsys, "stability", "--kind", "homogeneous", "--lambdas", "2,1", "--mode", 2)
    assert last_json(out)["verdict"] == "unstable"


def test_stability_constant_pattern_rejected(capsys):
    code, _, err = run(capsys, "stability", "--lambdas", "1,0.2", "--beta", 1, "--pattern", "+++")
    assert code == EXIT_INVALID and "homogeneous" in err
    assert run(capsys, "stability")[0] == EXIT_INVALID


def test_stability_curve_tanh(tmp_path, capsys):
    path = tmp_path / "th.csv"
    code, out, _ = run(capsys, "stability", "--curve", "--lambda-p", 1, "--r", 1, "--out", path)
    assert code == EXIT_OK and last_json(out)["beta_star"] == 0.0
    rows = read_csv(path)
    assert list(rows[0]) == ["beta", "sigma_bound", "is_endpoint"]
    assert max(abs(float(r["sigma_bound"]) - math.tanh(float(r["beta"]))) for r in rows) < 1e-12


def test_threshold_command(tmp_path, capsys):
    path = tmp_path / "th.csv"
    code, out, _ = run(capsys, "threshold", "--lambda-p", 1, "--r", 2, "--out", path, "--num", 11)
    assert code == EXIT_OK
    assert last_json(out)["beta_star"] == pytest.approx(0.5 * math.log(2))
    rows = read_csv(path)
    # the grid gains the exact endpoint beta*
    assert len(rows) == 12 and sum(r["is_endpoint"] == "1" for r in rows) == 1


def test_verify_suite_runs(capsys):
    code, out, _ = run(capsys, "verify", "spectrum-oracle", "--trials", 3)
    assert code == EXIT_OK
    lines = [json.loads(x) for x in out.strip().splitlines()]
    assert lines and all(x["passed"] and x["suite"] == "spectrum-oracle" for x in lines)


def test_verify_rejects_foreign_flag(capsys):
    code, _, err = run(capsys, "verify", "rho-monotone", "--delta", 0.1)
    assert code == EXIT_INVALID and "--delta" in err


def test_verify_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setitem(SUITES, "spectrum-oracle", lambda trials=1, seed=0: [{"name": "x", "passed": False}])
    assert run(capsys, "verify", "spectrum-oracle")[0] == EXIT_FAIL


def test_experiment_command(tmp_path, capsys):
    code, out, _ = run(capsys, "experiment", "fig5", "--out", tmp_path)
    assert code == EXIT_OK
    assert "threshold_r1.csv" in last_json(out)["files"]
    code, out, _ = run(capsys, "experiment", "fig2.json", "--trials", 2, "--t-end", 1, "--out", tmp_path / "f2")
    assert code == EXIT_OK
    rep = last_json(out)
    assert [b["beta"] for b in rep["betas"]] == [0.1, 1.0, 1.5]
    manifest = json.loads((tmp_path / "f2" / "manifest.json").read_text())
    assert len(set(manifest["initial_hash"].values())) == 1


def test_seed_precedence(monkeypatch, tmp_path, capsys):
    monkeypatch.delenv("SAL_SEED", raising=False)
    assert resolve_seed(None, 5) == 5 and resolve_seed(None, None) == 0
    monkeypatch.setenv("SAL_SEED", "9")
    assert resolve_seed(None, 5) == 9 and resolve_seed(3, 5) == 3
    run(capsys, "simulate", "--t-end", 0, "--out", tmp_path / "a")
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 9
    run(capsys, "simulate", "--t-end", 0, "--seed", 4, "--out", tmp_path / "b")
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 4
    monkeypatch.setenv("SAL_SEED", "abc")
    assert run(capsys, "simulate", "--t-end", 0, "--out", tmp_path / "c")[0] == EXIT_INVALID
