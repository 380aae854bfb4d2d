"""Tests for the command line interface: subcommands, wire formats,
determinism, caching, and exit codes."""

import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from nodalsphere.cli import main

CONFIG_PATH = os.path.abspath("configs/default.cfg")


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("sweep")
    rc = run("--config", CONFIG_PATH, "--out", str(path),
             "sweep", "--eps-list", "0.5,0.3")
    assert rc == 0
    return path


def _variant_config(tmp_path, **overrides):
    text = Path(CONFIG_PATH).read_text()
    lines = []
    for line in text.splitlines():
        key = line.split("=")[0].strip() if "=" in line else None
        if key in overrides:
            lines.append(f"{key} = {overrides.pop(key)}")
        else:
            lines.append(line)
    for key, value in overrides.items():
        lines.append(f"{key} = {value}")
    path = tmp_path / "variant.cfg"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_validate_ok(outdir, capsys):
    rc = run("--config", CONFIG_PATH, "--out", str(outdir), "validate")
    out = capsys.readouterr().out
    assert rc == 0
    assert "config ok" in out


def test_validate_missing_file(outdir, capsys):
    rc = run("--config", str(outdir / "nope.cfg"), "--out", str(outdir),
             "validate")
    err = capsys.readouterr().err
    assert rc == 2
    assert "error:" in err


def test_supercritical_config_rejected(outdir, tmp_path, capsys):
    bad = _variant_config(tmp_path, N=5, k=1)
    rc = run("--config", bad, "--out", str(outdir), "validate")
    err = capsys.readouterr().err
    assert rc == 2
    assert "error:" in err


def test_check_nonlinearity(outdir, capsys):
    rc = run("--config", CONFIG_PATH, "--out", str(outdir),
             "check-nonlinearity")
    out = capsys.readouterr().out
    assert rc == 0
    assert "all constraints within" in out
    for eps in ("0.5", "0.2", "0.1"):
        lines = (outdir / f"check_nonlinearity_{eps}.csv") \
            .read_text().splitlines()
        assert lines[0] == "constraint,max_violation,arg_max"
        names = [ln.split(",")[0] for ln in lines[1:]]
        assert names == ["cap_bound", "derivative_range",
                         "quotient_monotone", "halfquadratic_bound",
                         "superquadratic_bound"]
        assert all(float(ln.split(",")[1]) <= 1e-12 for ln in lines[1:])


def test_check_nonlinearity_custom_eps(outdir):
    rc = run("--config", CONFIG_PATH, "--out", str(outdir),
             "check-nonlinearity", "--eps", "0.25")
    assert rc == 0
    assert (outdir / "check_nonlinearity_0.25.csv").exists()


def test_ground_energy_and_cache(outdir):
    rc = run("--config", CONFIG_PATH, "--out", str(outdir), "ground-energy")
    assert rc == 0
    first = (outdir / "ground_energy.csv").read_text()
    assert first.splitlines()[0] == "a,E"
    rc = run("--config", CONFIG_PATH, "--out", str(outdir), "ground-energy")
    assert rc == 0
    assert (outdir / "ground_energy.csv").read_text() == first
    assert any((outdir / "cache").iterdir())


def test_aux_potential_outputs(outdir):
    rc = run("--config", CONFIG_PATH, "--out", str(outdir), "aux-potential")
    assert rc == 0
    payload = json.loads((outdir / "aux_potential.json").read_text())
    assert set(payload) == {"x0", "M0", "boundary_inf", "M1_satisfied",
                            "hperp_inf"}
    assert payload["M1_satisfied"] is True
    assert abs(payload["x0"][-1] - 1.9291503) < 1e-4
    assert abs(payload["M0"] - 5.15015) / 5.15015 < 1e-3
    lines = (outdir / "aux_potential.csv").read_text().splitlines()
    assert lines[0] == "r,M"


def test_solve_outputs(outdir):
    rc = run("--config", CONFIG_PATH, "--out", str(outdir),
             "solve", "--eps", "0.5", "--out-prefix", "demo")
    assert rc == 0
    for ext in (".json", ".bin", ".csv"):
        assert (outdir / ("demo" + ext)).exists()
    payload = json.loads((outdir / "demo.json").read_text())
    assert set(payload) >= {"d_eps", "eps_k_d_eps", "residuals", "P1", "P2",
                            "iterations", "converged"}
    assert payload["converged"] is True
    assert payload["residuals"]["pde"] < 1e-6
    assert payload["eps_k_d_eps"] == pytest.approx(
        0.25 * payload["d_eps"], rel=1e-12)
    field_lines = (outdir / "demo.csv").read_text().splitlines()
    assert field_lines[0] == "r,value"


def test_sweep_outputs(sweep_dir):
    conc = (sweep_dir / "concentration.csv").read_text().splitlines()
    assert conc[0].startswith("eps,d_eps,eps_k_d_eps,target,ratio,P1,P2")
    assert len(conc) == 3
    summary = json.loads((sweep_dir / "summary.json").read_text())
    assert set(summary) == {"config_hash", "eps_list", "per_eps", "trends"}
    assert summary["eps_list"] == [0.5, 0.3]
    assert all(summary["per_eps"][k]["ok"] for k in ("0.5", "0.3"))
    assert "energy_scaling" in summary["trends"]
    for name in ("ratio_vs_eps", "peak_radius_vs_eps", "decay_profile"):
        assert (sweep_dir / (name + ".csv")).exists()
        assert (sweep_dir / (name + ".png")).exists()
        first = (sweep_dir / (name + ".csv")).read_text().splitlines()[0]
        assert first.startswith("#")
    assert (sweep_dir / "timings.txt").exists()


def test_sweep_rerun_uses_cache_and_is_deterministic(sweep_dir, capsys):
    before = (sweep_dir / "concentration.csv").read_bytes()
    rc = run("--config", CONFIG_PATH, "--out", str(sweep_dir),
             "sweep", "--eps-list", "0.5,0.3")
    out = capsys.readouterr().out
    assert rc == 0
    assert out.count("loaded stored solution") == 2
    assert (sweep_dir / "concentration.csv").read_bytes() == before


def test_decay_csv_excludes_tiny_values(sweep_dir):
    lines = (sweep_dir / "decay_profile.csv").read_text().splitlines()
    import math
    floor_log = math.log(1e-12)
    for ln in lines[2:]:
        assert float(ln.split(",")[1]) > floor_log - 1e-9


def test_report_from_stored_solutions(sweep_dir, tmp_path, capsys):
    alt = tmp_path / "rep"
    alt.mkdir()
    for name in os.listdir(sweep_dir):
        if name.startswith("solution_eps"):
            shutil.copy(sweep_dir / name, alt / name)
    rc = run("--config", CONFIG_PATH, "--out", str(alt), "report")
    out = capsys.readouterr().out
    assert rc == 0
    assert (alt / "concentration.csv").exists()
    assert (alt / "trend_summary.json").exists()
    assert (alt / "concentration.csv").read_bytes() == \
        (sweep_dir / "concentration.csv").read_bytes()
    assert "ratio" in out


def test_report_without_solutions(tmp_path, capsys):
    rc = run("--config", CONFIG_PATH, "--out", str(tmp_path), "report")
    err = capsys.readouterr().err
    assert rc == 2
    assert "no stored solutions" in err


def test_sweep_rejects_bad_eps_lists(tmp_path, capsys):
    for bad in ("", "0.3,0.5", "0.5,-0.1", "0.5,abc"):
        rc = run("--config", CONFIG_PATH, "--out", str(tmp_path),
                 "sweep", "--eps-list", bad)
        capsys.readouterr()
        assert rc == 2


def test_sweep_rejects_constant_potential(tmp_path, capsys):
    flat = _variant_config(tmp_path, **{"potential.kind": "constant",
                                        "potential.params": "2.0"})
    rc = run("--config", flat, "--out", str(tmp_path), "sweep",
             "--eps-list", "0.5,0.3")
    err = capsys.readouterr().err
    assert rc == 2
    assert "interior minimum" in err


def test_nehari_diagnostics(sweep_dir, capsys):
    rc = run("--config", CONFIG_PATH, "--out", str(sweep_dir),
             "nehari-diagnostics", "--eps", "0.3")
    out = capsys.readouterr().out
    assert rc == 0
    assert "argmax at (t,s)=(1,1)" in out
    lines = (sweep_dir / "nehari_diagnostics.csv").read_text().splitlines()
    assert lines[0] == "t,s,psi"
    assert len(lines) == 1 + 41 * 41
    payload = json.loads((sweep_dir / "nehari_diagnostics.json").read_text())
    assert payload["argmax"] == [1.0, 1.0]
    assert payload["direction"]["passed"] is True
    assert payload["coercivity"]["passed"] is True
    hess = payload["hessian"]
    assert hess[0][0] < 0 and hess[1][1] < 0


def test_console_entry_point(tmp_path):
    exe = shutil.which("nodalsphere")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run([exe, "--config", CONFIG_PATH, "--out",
                           str(tmp_path), "validate"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "config ok" in proc.stdout


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nodalsphere.cli",
                           "--config", CONFIG_PATH, "--out", str(tmp_path),
                           "validate"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "config ok" in proc.stdout
