"""End-to-end command-line checks via subprocess: exit codes, JSON
payloads, manifests, determinism, and the file-writing commands."""

import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from ccdesign.covmodel import save_matrix_csv

EQUI_K4_RHO05_SHANNON = 2.9257265599673192
EQUI_K4_RHO05_ALPHA1_SHANNON = 3.681365045404687


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "ccdesign", *args],
                          capture_output=True, text=True, cwd=cwd)


FAST_SIM = ("--k", "6", "--n", "2", "--pattern", "toeplitz", "--rho", "0.5",
            "--budget", "4", "--delta", "4", "--policies", "EccAht",
            "--seeds", "2", "--horizon", "25", "--jobs", "1")


# ---------------------------------------------------------------------------
# exit codes and usage

def test_version_exits_zero():
    proc = run_cli("--version")
    assert proc.returncode == 0
    assert "ccdesign" in proc.stdout


def test_no_command_is_usage_error():
    proc = run_cli()
    assert proc.returncode == 1
    assert "usage" in proc.stderr.lower()


def test_unknown_flag_exits_one_with_usage():
    proc = run_cli("spectrum", "--bogus-flag", "1")
    assert proc.returncode == 1
    assert "usage" in proc.stderr.lower()
    assert "ccdesign: error:" in proc.stderr


def test_unknown_preset_exits_one():
    proc = run_cli("simulate", "--preset", "banana")
    assert proc.returncode == 1
    assert "banana" in proc.stderr


def test_numeric_failure_exits_two(tmp_path):
    indefinite = tmp_path / "bad.csv"
    save_matrix_csv(np.array([[1.0, 2.0], [2.0, 1.0]]), indefinite)
    proc = run_cli("spectrum", "--matrix", str(indefinite))
    assert proc.returncode == 2
    assert "ccdesign: error:" in proc.stderr


# ---------------------------------------------------------------------------
# spectrum

def test_spectrum_stdout_json():
    proc = run_cli("spectrum", "--pattern", "equicorrelation", "--k", "4",
                   "--rho", "0.5")
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["k"] == 4
    assert payload["shannon_er"] == pytest.approx(EQUI_K4_RHO05_SHANNON, abs=1e-9)
    assert payload["pr_er"] == pytest.approx(16.0 / 7.0, abs=1e-9)
    assert payload["lambda_max"] == pytest.approx(2.5, abs=1e-9)


def test_spectrum_regularize_flag():
    proc = run_cli("spectrum", "--pattern", "equicorrelation", "--k", "4",
                   "--rho", "0.5", "--regularize", "1.0")
    payload = json.loads(proc.stdout)
    assert payload["shannon_er"] == pytest.approx(EQUI_K4_RHO05_ALPHA1_SHANNON,
                                                  abs=1e-9)


def test_spectrum_needs_pattern_or_matrix():
    proc = run_cli("spectrum")
    assert proc.returncode == 1
    assert "pattern" in proc.stderr


# ---------------------------------------------------------------------------
# design

def test_design_identity_payload(tmp_path):
    eye = tmp_path / "i2.csv"
    save_matrix_csv(np.eye(2), eye)
    proc = run_cli("design", "--matrix", str(eye), "--pair", "0", "1",
                   "--delta", "1.0", "--budget", "5.0")
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    np.testing.assert_allclose(payload["c"], [0.5, -0.5], atol=1e-12)
    assert payload["objective"] == pytest.approx(0.5, abs=1e-12)
    assert payload["l1_norm"] == pytest.approx(1.0, abs=1e-12)
    assert payload["budget_active"] is False
    assert payload["eq_residual"] <= 1e-6
    assert payload["kkt_residual"] <= 1e-8
    assert payload["min_feasible_budget"] == pytest.approx(1.0)
    assert payload["pair"] == [0, 1]


def test_design_infeasible_budget_exits_one(tmp_path):
    eye = tmp_path / "i2.csv"
    save_matrix_csv(np.eye(2), eye)
    proc = run_cli("design", "--matrix", str(eye), "--pair", "0", "1",
                   "--delta", "1.0", "--budget", "0.8")
    assert proc.returncode == 1
    assert "1" in proc.stderr  # names the minimum feasible budget


def test_design_rejects_identical_pair(tmp_path):
    eye = tmp_path / "i2.csv"
    save_matrix_csv(np.eye(2), eye)
    proc = run_cli("design", "--matrix", str(eye), "--pair", "0", "0")
    assert proc.returncode == 1


# ---------------------------------------------------------------------------
# gen-cov

def test_gen_cov_writes_matrix_spectrum_manifest(tmp_path):
    out = tmp_path / "cov"
    proc = run_cli("gen-cov", "--pattern", "toeplitz", "--k", "8",
                   "--rho", "0.5", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    assert "wrote" in proc.stdout
    from ccdesign.covmodel import load_matrix_csv
    sigma = load_matrix_csv(out / "sigma.csv")
    assert sigma.shape == (8, 8)
    np.testing.assert_allclose(np.diag(sigma), 1.0)
    spec = json.loads((out / "spectrum.json").read_text())
    assert spec["k"] == 8
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["schema"] == 1
    assert manifest["tool"] == "ccdesign"
    assert manifest["command"] == "gen-cov"
    assert manifest["seed"] == 0
    assert manifest["rng_scheme"]
    assert manifest["config"]["k"] == 8
    lowered = (out / "manifest.json").read_text().lower()
    assert "timestamp" not in lowered and "date" not in lowered


# ---------------------------------------------------------------------------
# simulate / sweep

def test_simulate_stdout_json_without_out():
    proc = run_cli("simulate", *FAST_SIM)
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert payload["schema"] == 1
    point = payload["grid"][0]
    assert "EccAht" in point["policies"]
    stats = point["policies"]["EccAht"]
    assert 0.0 <= stats["final_f1_mean"] <= 1.0


def test_simulate_writes_run_dir_and_manifest(tmp_path):
    out = tmp_path / "run"
    proc = run_cli("simulate", *FAST_SIM, "--out", str(out), "--seed", "7")
    assert proc.returncode == 0, proc.stderr
    for name in ("raw.csv", "summary.json", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 7
    assert manifest["config"]["k"] == 6
    assert manifest["version"]
    lowered = (out / "manifest.json").read_text().lower()
    assert "timestamp" not in lowered


def test_simulate_reruns_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        proc = run_cli("simulate", *FAST_SIM, "--out", str(out), "--seed", "3")
        assert proc.returncode == 0, proc.stderr
    assert (out1 / "raw.csv").read_bytes() == (out2 / "raw.csv").read_bytes()
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()


def test_config_precedence_defaults_preset_file_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 9, "seeds": 2, "horizon": 20,
                               "policies": ["EccAht"]}))
    common = ("--preset", "fig1-toy", "--config", str(cfg), "--jobs", "1")

    out1 = tmp_path / "flag-wins"
    proc = run_cli("simulate", *common, "--k", "7", "--out", str(out1))
    assert proc.returncode == 0, proc.stderr
    assert json.loads((out1 / "manifest.json").read_text())["config"]["k"] == 7

    out2 = tmp_path / "file-wins"
    proc = run_cli("simulate", *common, "--out", str(out2))
    assert proc.returncode == 0, proc.stderr
    assert json.loads((out2 / "manifest.json").read_text())["config"]["k"] == 9

    out3 = tmp_path / "preset-wins"
    proc = run_cli("simulate", "--preset", "fig1-toy", "--policies", "EccAht",
                   "--seeds", "2", "--horizon", "20", "--jobs", "1",
                   "--out", str(out3))
    assert proc.returncode == 0, proc.stderr
    assert json.loads((out3 / "manifest.json").read_text())["config"]["k"] == 15


def test_unknown_config_key_exits_one(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 6, "n": 2, "bananas": 1}))
    proc = run_cli("simulate", "--config", str(cfg))
    assert proc.returncode == 1
    assert "bananas" in proc.stderr


def test_sweep_requires_sweep_param():
    proc = run_cli("sweep", *FAST_SIM)
    assert proc.returncode == 1
    assert "sweep" in proc.stderr


def test_sweep_runs_each_grid_point():
    proc = run_cli("sweep", *FAST_SIM, "--sweep-param", "rho",
                   "--sweep-grid", "0.0,0.5")
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(proc.stdout)
    assert [pt["grid_value"] for pt in payload["grid"]] == [0.0, 0.5]
    for pt in payload["grid"]:
        assert "EccAht" in pt["policies"]


# ---------------------------------------------------------------------------
# ingest / replay / report

@pytest.fixture(scope="module")
def sensor_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-sensor")
    n = 1800
    rng = np.random.default_rng(271828)
    t = np.arange(n, dtype=float)
    fit = np.sin(2 * np.pi * t / 300.0) * 2.0 + rng.normal(0, 0.05, n)
    pit = np.cos(2 * np.pi * t / 450.0) + rng.normal(0, 0.05, n)
    mv = ((t // 450) % 2).astype(float)
    label = np.zeros(n, dtype=int)
    label[1200:1440] = 1
    fit[1200:1440] += 6.0
    stamps = pd.date_range("2024-03-01", periods=n, freq="1s")
    df = pd.DataFrame({"timestamp": stamps.strftime("%Y-%m-%d %H:%M:%S"),
                       "1_FIT_001_PV": fit, "2_PIT_002_PV": pit,
                       "1_MV_001_STATUS": mv, "label": label})
    path = root / "sensor.csv"
    df.to_csv(path, index=False)
    return path


def test_ingest_then_replay_cli(sensor_csv, tmp_path):
    bundle = tmp_path / "bundle"
    proc = run_cli("ingest", "--csv", str(sensor_csv), "--label-col", "label",
                   "--window-seconds", "60", "--out", str(bundle))
    assert proc.returncode == 0, proc.stderr
    assert "30 windows" in proc.stdout
    assert "(4 anomalous)" in proc.stdout
    for name in ("windows.csv", "sigma.csv", "model.json", "meta.json",
                 "manifest.json"):
        assert (bundle / name).exists(), name

    rep = tmp_path / "rep"
    proc = run_cli("replay", "--bundle", str(bundle), "--budget", "3",
                   "--n", "1", "--policies", "EccAht,EccAhtDiagonal",
                   "--out", str(rep))
    assert proc.returncode == 0, proc.stderr
    assert "EccAht:" in proc.stdout and "EccAhtDiagonal:" in proc.stdout
    assert "s_hat=(0,)" in proc.stdout  # the shifted channel is found
    raw = (rep / "replay.csv").read_text()
    assert "EccAht" in raw and "EccAhtDiagonal" in raw
    manifest = json.loads((rep / "manifest.json").read_text())
    assert manifest["command"] == "replay"
    assert manifest["config"]["s_star"] == [0]


def test_report_renders_svg(tmp_path):
    out = tmp_path / "run"
    proc = run_cli("simulate", *FAST_SIM, "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    proc = run_cli("report", "--run", str(out))
    assert proc.returncode == 0, proc.stderr
    svg = out / "f1_vs_samples.svg"
    assert svg.exists()
    head = svg.read_text()[:200]
    assert "<?xml" in head or "<svg" in head
    assert str(svg) in proc.stdout


def test_report_missing_summary_exits_one(tmp_path):
    proc = run_cli("report", "--run", str(tmp_path / "nope"))
    assert proc.returncode == 1
