"""Tests for the command line."""

import json
import logging
import os
import subprocess
import sys
from pathlib import Path

import pytest

from turing_hopf.model import embedded_model_text

_LOGGER = logging.getLogger(__name__)

_DIR = Path(__file__).parent
_PROGRAM_DIR = _DIR.parent

_COMMAND_TIMEOUT = 600


def _run(*args: str, env: dict | None = None) -> subprocess.CompletedProcess:
    proc = subprocess.run(
        [sys.executable, "-m", "turing_hopf", *args],
        cwd=_PROGRAM_DIR,
        capture_output=True,
        text=True,
        timeout=_COMMAND_TIMEOUT,
        env=env,
    )
    _LOGGER.info("turing_hopf %s -> %d", " ".join(args), proc.returncode)
    return proc


def _error(proc: subprocess.CompletedProcess) -> dict:
    return json.loads(proc.stderr.strip().splitlines()[-1])


def test_analyze() -> None:
    """Test the point document on stdout."""
    proc = _run("analyze")
    assert proc.returncode == 0, proc.stderr
    document = json.loads(proc.stdout)
    assert document["kind"] == "point"
    assert document["point"]["n2"] == 5
    assert document["point"]["mu"] == pytest.approx([0.4567, 2.8646], abs=1e-3)
    assert document["point"]["omega_original"] == pytest.approx(2.8899, abs=1e-3)
    assert document["model"]["parameters"] == ["tau", "r"]


def test_analyze_is_deterministic(tmp_path) -> None:
    """Test two runs write byte-identical documents."""
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert _run("analyze", "-o", str(first)).returncode == 0
    assert _run("analyze", "-o", str(second)).returncode == 0
    assert first.read_bytes() == second.read_bytes()


def test_amplitude_predictions() -> None:
    """Test predictions at the sample offsets."""
    proc = _run("amplitude", "--alpha", "0.05,-0.33", "--alpha", "-0.1,-0.4")
    assert proc.returncode == 0, proc.stderr
    document = json.loads(proc.stdout)
    assert document["amplitude"]["case"] == "Ia"
    cases = [[a["case"] for a in p["attractors"]] for p in document["predictions"]]
    assert cases == [[4], [3]]


def test_regions(tmp_path) -> None:
    """Test region files land in the output directory."""
    proc = _run("regions", "--resolution", "60", "--out-dir", str(tmp_path))
    assert proc.returncode == 0, proc.stderr
    document = json.loads(proc.stdout)
    assert document["case"] == "Ia"
    for name in ("regions.csv", "rays.csv", "regions.gp"):
        assert (tmp_path / name).exists()


def test_simulate_files(tmp_path) -> None:
    """Test a short mirrored run and its exports."""
    csv_path, binary_path = tmp_path / "run.csv", tmp_path / "run.thk"
    proc = _run(
        "simulate",
        "--t-end",
        "20",
        "--n-points",
        "64",
        "--stride",
        "10",
        "--perturb",
        "u:cos:5:0.005",
        "--mirror",
        "--workers",
        "1",
        "--csv",
        str(csv_path),
        "--binary",
        str(binary_path),
    )
    assert proc.returncode == 0, proc.stderr
    document = json.loads(proc.stdout)
    assert document["kind"] == "simulation"
    assert document["simulation"]["n_points"] == 64
    assert document["mirror"]["mismatch"] < 1e-8
    for path in (csv_path, binary_path, tmp_path / "run-mirror.csv", tmp_path / "run-mirror.thk"):
        assert path.exists(), path


@pytest.mark.integration
def test_selftest() -> None:
    """Test the built-in golden checks pass."""
    proc = _run("selftest")
    assert proc.returncode == 0, proc.stdout
    document = json.loads(proc.stdout)
    assert document["failed"] == []
    assert len(document["checks"]) > 20


def test_usage_error() -> None:
    """Test malformed arguments exit 1 with a JSON error line."""
    proc = _run("amplitude", "--alpha", "0.05")
    assert proc.returncode == 1
    assert _error(proc)["code"] == "input"


def test_unknown_symbol(tmp_path) -> None:
    """Test model input errors exit 1."""
    path = tmp_path / "bad.toml"
    path.write_text(embedded_model_text().replace('g = "r*v*', 'g = "s*v*', 1), encoding="utf-8")
    proc = _run("analyze", str(path))
    assert proc.returncode == 1
    assert _error(proc)["code"] == "unknown_symbol"


def test_non_positive_diffusion(tmp_path) -> None:
    """Test model errors exit 2."""
    path = tmp_path / "negative.toml"
    path.write_text(embedded_model_text().replace('d1 = "0.1"', 'd1 = "-0.1"', 1), encoding="utf-8")
    proc = _run("analyze", str(path))
    assert proc.returncode == 2
    assert _error(proc)["code"] == "non_positive_diffusion"


def test_model_from_environment(tmp_path) -> None:
    """Test TURING_HOPF_MODEL names the model file."""
    env = dict(os.environ, TURING_HOPF_MODEL=str(tmp_path / "missing.toml"))
    proc = _run("analyze", env=env)
    assert proc.returncode == 1
    assert _error(proc)["code"] == "model_parse"
