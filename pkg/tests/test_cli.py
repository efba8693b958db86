import csv
import json

import numpy as np
import pytest

from app.cli.commands import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_OUTPUT, main
from app.schemas.run_config import RunSolver
from app.services.config_parser import parse_config
from app.services.scenario_runner import run_scenario

SMALL = {
    "name": "small",
    "model": {
        "energies": [0.0, 0.8],
        "reservoir": {"frequencies": [0.2, 0.6, 0.9, 1.3], "weights": [0.25, 0.25, 0.25, 0.25]},
        "channels": [
            {"target": 0, "source": 1, "tabulated": {"values": [0.2, 0.3, [0.1, 0.1], 0.2]}},
            {"target": 1, "source": 0, "tabulated": {"values": [0.1, 0.0, 0.1, 0.05]}},
        ],
    },
    "initial": {"c0": [0.6, 0.8]},
    "run": {"T": 2.0, "dt": 0.001, "n_samples": 11},
}


def _write(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as csvfile:
        reader = csv.DictReader(csvfile)
        return [{key: float(value) for key, value in row.items()} for row in reader]


def test_check_valid_config(tmp_path):
    """Test that check accepts a valid config"""
    assert main(["check", _write(tmp_path, SMALL)]) == EXIT_OK


def test_check_invalid_config(tmp_path):
    """Test exit code 1 for a rejected config"""
    data = json.loads(json.dumps(SMALL))
    data["run"]["dt"] = -0.1
    assert main(["check", _write(tmp_path, data)]) == EXIT_CONFIG


def test_unknown_preset_exit_code():
    """Test exit code 1 for an unknown preset"""
    assert main(["preset", "no-such-preset"]) == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path):
    """Test exit code 2 when dt cannot resolve the fastest frequency"""
    data = json.loads(json.dumps(SMALL))
    data["model"]["energies"] = [0.0, 10.0]
    data["run"]["dt"] = 0.1
    assert main(["run", _write(tmp_path, data), "--out", str(tmp_path / "out")]) == EXIT_NUMERICAL


def test_output_failure_exit_code(tmp_path):
    """Test exit code 3 when the output directory sits under a regular file"""
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")
    assert main(["run", _write(tmp_path, SMALL), "--out", str(blocker / "out")]) == EXIT_OUTPUT


def test_rwa_preset_reproduces_rabi_oscillation(tmp_path, capsys):
    """Test the bundled resonant preset: |c_1|^2 = cos^2(0.2 t) in the written CSV"""
    out = tmp_path / "rwa"
    assert main(["preset", "rwa-resonant", "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out.split()
    assert "rwa-resonant_direct.csv" in printed
    assert "rwa-resonant_kernels.csv" in printed

    rows = _read_csv(out / "rwa-resonant_direct.csv")
    assert len(rows) == 201
    t = np.array([row["t"] for row in rows])
    c1 = np.array([row["re_c1"] ** 2 + row["im_c1"] ** 2 for row in rows])
    np.testing.assert_allclose(c1, np.cos(0.2 * t) ** 2, atol=1e-6)
    rho00 = np.array([row["re_rho00"] for row in rows])
    np.testing.assert_allclose(rho00, 1.0 - c1, atol=1e-8)

    manifest = json.loads((out / "rwa-resonant_manifest.json").read_text(encoding="utf-8"))
    assert manifest["model"] == {"d": 2, "n_modes": 1, "spin_boson": True}
    assert manifest["asymptotics"]["predicted_rho00_limit"] == pytest.approx(1.0)
    assert manifest["asymptotics"]["approachable"] is False
    assert len(manifest["config_sha256"]) == 64


def test_solver_override_writes_deviation(tmp_path):
    """Test solver=both: both trajectories and a small deviation report"""
    out = tmp_path / "both"
    assert main(["run", _write(tmp_path, SMALL), "--solver", "both", "--out", str(out)]) == EXIT_OK
    assert (out / "small_direct.csv").is_file()
    assert (out / "small_volterra.csv").is_file()
    deviation = json.loads((out / "small_deviation.json").read_text(encoding="utf-8"))
    assert deviation["max_abs_c"] < 1e-5
    assert deviation["max_abs_rho"] < 1e-5


def test_run_scenario_summary(tmp_path):
    """Test the summary, reduced columns, constants and the CPTP report of one run"""
    data = json.loads(json.dumps(SMALL))
    data["output"] = {"directory": str(tmp_path / "run"), "modes": True, "cptp": True, "cptp_samples": 3,
                      "map_method": "direct", "correlations": True}
    summary = run_scenario(parse_config(json.dumps(data)))
    assert summary.cptp_passed is True
    assert summary.max_deviation is None
    assert summary.norm_drift["direct"] < 1e-8
    assert set(summary.files) >= {
        "small_direct.csv",
        "small_correlations.csv",
        "small_cptp.json",
        "small_maps.json",
        "small_manifest.json",
    }

    rows = _read_csv(tmp_path / "run" / "small_direct.csv")
    assert {"p0", "p1", "norm", "re_g0_3", "im_g1_0"} <= set(rows[0])
    p1 = np.array([row["p1"] for row in rows])
    assert np.max(np.abs(p1 - p1[0])) < 1e-8

    cptp = json.loads((tmp_path / "run" / "small_cptp.json").read_text(encoding="utf-8"))
    assert cptp["verdict"] == "PASS"
    assert len(cptp["reports"]) == 3


def test_oracle_solver_run(tmp_path):
    """Test a run on the exact propagator"""
    data = json.loads(json.dumps(SMALL))
    data["run"]["solver"] = RunSolver.ORACLE.value
    data["output"] = {"directory": str(tmp_path / "oracle")}
    summary = run_scenario(parse_config(json.dumps(data)))
    assert summary.files[0] == "small_oracle.csv"
    assert summary.norm_drift["oracle"] < 1e-12


def test_repeated_runs_write_identical_data(tmp_path):
    """Test that data files are bit-identical across runs of one config"""
    data = json.loads(json.dumps(SMALL))
    outputs = []
    for label in ("first", "second"):
        data["output"] = {"directory": str(tmp_path / label), "kernels": True}
        run_scenario(parse_config(json.dumps(data)))
        outputs.append(tmp_path / label)
    for name in ("small_direct.csv", "small_kernels.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_non_finite_amplitude_exit_code(tmp_path):
    """Test exit code 1, not a traceback, for an infinite initial amplitude"""
    data = json.loads(json.dumps(SMALL))
    data["initial"]["c0"] = [float("inf"), 0.0]
    path = _write(tmp_path, data)
    assert "Infinity" in (tmp_path / "scenario.json").read_text(encoding="utf-8")
    assert main(["check", path]) == EXIT_CONFIG
    assert main(["run", path, "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_non_finite_horizon_exit_code(tmp_path, caplog):
    """Test that an infinite run.T is a config error naming the key"""
    data = json.loads(json.dumps(SMALL))
    data["run"]["T"] = float("inf")
    assert main(["run", _write(tmp_path, data), "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    assert "run.T: must be finite" in caplog.text


def test_sector_weights_for_any_two_level_model(tmp_path):
    """Test p0/p1 columns for a two-level model outside the spin-boson shape"""
    data = json.loads(json.dumps(SMALL))
    data["model"]["energies"] = [0.3, 0.8]
    data["model"]["channels"].append({"target": 1, "source": 1, "tabulated": {"values": [0.05, 0.1, 0.0, 0.1]}})
    data["output"] = {"directory": str(tmp_path / "general")}
    summary = run_scenario(parse_config(json.dumps(data)))
    manifest = json.loads((tmp_path / "general" / "small_manifest.json").read_text(encoding="utf-8"))
    assert manifest["model"]["spin_boson"] is False
    assert "asymptotics" not in manifest

    rows = _read_csv(tmp_path / "general" / summary.files[0])
    p0 = np.array([row["p0"] for row in rows])
    p1 = np.array([row["p1"] for row in rows])
    norm = np.array([row["norm"] for row in rows])
    np.testing.assert_allclose(p0 + p1, norm, atol=1e-12)
