import csv
import json

import numpy as np
import pytest

from nflow import cli, domain
from nflow import verify
from nflow.smoke import smoke_dict


def write_cfg(path, **kw):
    raw = smoke_dict(2, counts=[16, 16], n_modes=8, dt=1e-3, t_end=4e-3)
    raw.update(kw)
    path.write_text(json.dumps(raw))
    return str(path)


def test_run_equilibrium(tmp_path):
    cfg = write_cfg(tmp_path / "eq.json", rho0=1.0, v0="0", tilt=0.0)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    with open(tmp_path / "out" / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    E = [float(r["E_delta"]) for r in rows]
    assert len(rows) == 5 and max(E) - min(E) <= 1e-12 * E[0]
    meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
    assert meta["config"]["rho0"] == 1.0 and meta["eps0"] == 0.05 and meta["build"].startswith("nflow-")
    grid, rho = domain.read_snapshot(tmp_path / "out" / "final_rho.snap")
    assert grid.counts == (16, 16) and np.allclose(rho, 1.0)
    assert (tmp_path / "out" / "final_d2.snap").exists()


def test_rerun_identical_trace(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    for name in ("a", "b"):
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_calibrated_eps0_in_metadata(tmp_path):
    raw_path = tmp_path / "c.json"
    raw = smoke_dict(2, counts=[16, 16], n_modes=8, dt=1e-3, t_end=1e-3, tilt=0.0, calibration_samples=4)
    del raw["eps0"]
    raw_path.write_text(json.dumps(raw))
    assert cli.main(["run", "--config", str(raw_path), "--out", str(tmp_path / "o")]) == 0
    meta = json.loads((tmp_path / "o" / "metadata.json").read_text())
    assert meta["calibration"]["eps0"] == meta["eps0"] > 0


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "bad.json", **{"lambda": -2.0})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "lambda + mu >= 0" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
    cfg = write_cfg(tmp_path / "c.json")
    assert cli.main(["sweep", "--config", cfg, "--param", "eps", "--values", "1e-3,1e-2", "--out", str(tmp_path / "s")]) == 2
    assert cli.main(["sweep", "--config", cfg, "--param", "eps", "--values", "-1", "--out", str(tmp_path / "s")]) == 2


def test_solver_failure_exit_1(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", dt=0.05, t_end=0.05, max_halvings=0, picard_maxit=10)
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "PicardDiverged" in capsys.readouterr().err


def test_sweep_summary(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    out = tmp_path / "s"
    assert cli.main(["sweep", "--config", cfg, "--param", "eps", "--values", "1e-2,5e-3", "--out", str(out), "--jobs", "2"]) == 0
    with open(out / "sweep-summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["value"]) for r in rows] == [1e-2, 5e-3]
    diss = [float(r["artificial_dissipation"]) for r in rows]
    assert diss[1] < diss[0]
    assert (out / "eps=0.005" / "trace.csv").exists()


def test_single_value_sweep_matches_run(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    assert cli.main(["sweep", "--config", cfg, "--param", "delta", "--values", "1e-3", "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    with open(tmp_path / "s" / "sweep-summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 1
    assert (tmp_path / "s" / "delta=0.001" / "trace.csv").read_bytes() == (tmp_path / "r" / "trace.csv").read_bytes()


def test_basis_command(tmp_path):
    cfg = write_cfg(tmp_path / "c.json")
    assert cli.main(["basis", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    info = json.loads((tmp_path / "b" / "basis.json").read_text())
    assert info["n_modes"] == 8 and np.all(np.diff(info["eigenvalues"]) >= 0)


def test_verify_passes_clean(tmp_path):
    assert cli.main(["verify", "--out", str(tmp_path)]) == 0
    assert "FAIL" not in (tmp_path / "verify.txt").read_text()


def test_verify_fails_with_zero_tolerance(tmp_path):
    assert cli.main(["verify", "--out", str(tmp_path), "--max-principle-tol", "0"]) != 0
    lines = (tmp_path / "verify.txt").read_text().splitlines()
    assert any(line.startswith("maximum_principle") and "FAIL" in line for line in lines)


def test_verify_catches_perturbed_stencil(monkeypatch):
    original = domain.second_diff

    def perturbed(a, axis, h, sign):
        return original(a, axis, h, sign) * (1.0 + 1e-6)

    monkeypatch.setattr(domain, "second_diff", perturbed)
    results = {r.name: r for r in verify.run_checks()}
    assert not results["stencil_eigenmodes"].passed
    assert not all(r.passed for r in results.values())


def test_verify_reports_exceptions(monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(domain, "face_form_array", broken)
    results = {r.name: r for r in verify.run_checks()}
    assert not results["summation_by_parts"].passed and "boom" in results["summation_by_parts"].note
