import json
import math

import numpy as np
import pytest

from cumvol.cli import main


def run(argv):
    try:
        return main(argv)
    except SystemExit as exc:  # argparse usage failures
        return exc.code


def read_manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))


def test_evolve_writes_densities_and_manifest(tmp_path):
    out = tmp_path / "run"
    code = run(["evolve", "--g", "0.2", "--noise", "gaussian:sigma=1", "--steps", "4",
                "--grid", "0,30,2048", "--out", str(out)])
    assert code == 0
    manifest = read_manifest(out)
    assert manifest["command"] == "evolve"
    assert len(manifest["outputs"]) == 4
    for name in manifest["outputs"]:
        f = out / name
        assert f.exists() and f.stat().st_size > 0
    first = (out / "rho_z_t0001.csv").read_text(encoding="utf-8").splitlines()
    assert first[0] == "x,density"
    assert len(first) == 2049
    steps = manifest["steps"]
    assert [s["t"] for s in steps] == [1, 2, 3, 4]
    assert all(s["mass_defect"] < 1e-3 for s in steps)
    assert steps[-1]["mean"] > steps[0]["mean"]


def test_evolve_default_grid(tmp_path):
    out = tmp_path / "rundef"
    code = run(["evolve", "--g", "0.2", "--noise", "gaussian:sigma=0.5", "--steps", "3",
                "--out", str(out)])
    assert code == 0
    assert read_manifest(out)["grid"]["n_points"] == 8192


def test_evolve_usage_errors(tmp_path):
    out = str(tmp_path / "x")
    assert run(["evolve", "--g", "0.2", "--noise", "gauss:sigma=1", "--steps", "3",
                "--out", out]) == 2
    assert run(["evolve", "--g", "0.2", "--noise", "gaussian:sigma=1", "--steps", "0",
                "--out", out]) == 2
    assert run(["evolve", "--g", "0.2", "--noise", "gaussian:sigma=1", "--steps", "3",
                "--grid", "1,5,100", "--out", out]) == 2
    assert run(["evolve", "--g", "0.2", "--noise", "gaussian:sigma=-1", "--steps", "3",
                "--out", out]) == 2


def test_volatility_until_converged(tmp_path):
    out = tmp_path / "vol"
    code = run(["volatility", "--g", "0.2", "--noise", "gaussian:sigma=0.1",
                "--until-converged", "--tol", "1e-7", "--out", str(out)])
    assert code == 0
    manifest = read_manifest(out)
    assert manifest["convergence"]["converged_at"] is not None
    report = json.loads((out / "volatility_report.json").read_text(encoding="utf-8"))
    assert report["ratio_to_narrow"] == pytest.approx(1.0, abs=0.05)
    # growth-increment densities settle: early steps change far more than late
    l1 = [s["y_l1_prev"] for s in manifest["steps"] if s["y_l1_prev"] is not None]
    assert l1[0] > 100 * l1[-1]


def test_volatility_rejects_nonpositive_drift_with_convergence_flag(tmp_path):
    code = run(["volatility", "--g", "-0.2", "--noise", "gaussian:sigma=0.1",
                "--until-converged", "--out", str(tmp_path / "vneg")])
    assert code == 4


def test_compare_saddle_sweep(tmp_path):
    out = tmp_path / "sweep"
    code = run(["compare-saddle", "--g", "0.2", "--sigma-sweep", "0.0025,0.01",
                "--out", str(out), "--tol", "1e-8"])
    assert code == 0
    rows = (out / "saddle_ratio.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0].startswith("sigma_a_sq,ratio")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    assert data.shape[0] == 2
    assert np.all(np.abs(data[:, 1] - 1.0) < 0.05)


def test_compare_saddle_empty_sweep_is_usage_error(tmp_path):
    assert run(["compare-saddle", "--g", "0.1", "--sigma-sweep", ",",
                "--out", str(tmp_path / "s")]) == 2


def test_simulate_deterministic_summary(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        code = run(["simulate", "--g", "0.2", "--noise", "gaussian:sigma=1",
                    "--paths", "500", "--steps", "5", "--seed", "11", "--out", str(out)])
        assert code == 0
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_simulate_rejects_zero_paths(tmp_path):
    assert run(["simulate", "--g", "0.2", "--noise", "gaussian:sigma=1",
                "--paths", "0", "--steps", "5", "--out", str(tmp_path / "s")]) == 2


def test_simulate_paths_csv_capped(tmp_path):
    out = tmp_path / "paths"
    code = run(["simulate", "--g", "0.2", "--noise", "gaussian:sigma=1",
                "--paths", "200", "--steps", "3", "--seed", "1", "--paths-csv",
                "--out", str(out)])
    assert code == 0
    lines = (out / "paths.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 201
    assert lines[0] == "path,z0,z1,z2,z3"


def test_simulate_against_evolve_run(tmp_path):
    ref = tmp_path / "ref"
    assert run(["evolve", "--g", "0.2", "--noise", "gaussian:sigma=1", "--steps", "5",
                "--grid", "0,40,4096", "--out", str(ref)]) == 0
    out = tmp_path / "mc"
    code = run(["simulate", "--g", "0.2", "--noise", "gaussian:sigma=1",
                "--paths", "20000", "--steps", "5", "--seed", "3",
                "--against", str(ref), "--out", str(out)])
    assert code == 0
    ks = json.loads((out / "ks_report.json").read_text(encoding="utf-8"))
    assert len(ks["ks_per_step"]) == 5
    assert max(r["ks"] for r in ks["ks_per_step"]) < 0.02


def test_volatility_narrow_noise_report_accuracy(tmp_path):
    out = tmp_path / "narrow"
    code = run(["volatility", "--g", "0.2", "--noise", "gaussian:sigma=0.01",
                "--until-converged", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "volatility_report.json").read_text(encoding="utf-8"))
    target = 1e-4 * math.tanh(0.1)
    assert report["variance"] == pytest.approx(target, rel=0.02)


def test_compare_saddle_threaded_matches_serial(tmp_path, monkeypatch):
    args = ["compare-saddle", "--g", "0.2", "--sigma-sweep", "0.0025,0.01", "--tol", "1e-8"]
    monkeypatch.delenv("CUMVOL_THREADS", raising=False)
    assert run(args + ["--out", str(tmp_path / "serial")]) == 0
    monkeypatch.setenv("CUMVOL_THREADS", "2")
    assert run(args + ["--out", str(tmp_path / "par")]) == 0
    serial = (tmp_path / "serial" / "saddle_ratio.csv").read_bytes()
    par = (tmp_path / "par" / "saddle_ratio.csv").read_bytes()
    assert serial == par


def test_trace_write_dir(tmp_path):
    import cumvol as cv
    noise = cv.gaussian(0.5)
    cfg = cv.EvolutionConfig(g=0.2, noise=noise, grid=cv.cell_grid(10.0, 512),
                             horizon=3, convergence_tol=1e-300)
    names = cv.evolve_z(cfg).write_dir(tmp_path / "trace")
    assert names[-1] == "trace.json"
    meta = json.loads((tmp_path / "trace" / "trace.json").read_text(encoding="utf-8"))
    assert len(meta["steps"]) == 3
    for name in names:
        assert (tmp_path / "trace" / name).stat().st_size > 0


def test_table_noise_round_trip(tmp_path):
    table = tmp_path / "noise.csv"
    table.write_text("x,density\n-0.5,0.5\n0,1.0\n0.5,0.5\n", encoding="utf-8")
    out = tmp_path / "tab"
    code = run(["evolve", "--g", "0.1", "--noise", f"table:{table}", "--steps", "3",
                "--grid", "0,10,1024", "--out", str(out)])
    assert code == 0
    assert len(read_manifest(out)["steps"]) == 3
