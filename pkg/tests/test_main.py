"""Tests for the command-line entry point."""

import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import pytest

from splitmap import __version__
from splitmap.main import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
CONSTANT = str(SCENARIOS / "constant.toml")


def test_validate_prints_report(capsys):
    """Test validate prints the JSON report and exits 0."""
    assert main(["validate", "--config", CONSTANT]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] is True
    assert report["violations"] == []


def test_missing_config_exits_2(tmp_path, capsys):
    """Test a missing scenario file is reported as a config error."""
    code = main(["validate", "--config", str(tmp_path / "absent.toml")])
    assert code == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigError"
    assert error["context"]["field"] == "config"


def test_run_writes_manifest(tmp_path):
    """Test run writes the manifest into --out."""
    assert main(["run", "--config", CONSTANT, "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["scenario"]["seed"] == 0
    assert "field.csv" in manifest["artifacts"]


def test_seed_override(tmp_path):
    """Test --seed replaces the scenario seed in the manifest."""
    assert main(["run", "--config", CONSTANT, "--out", str(tmp_path), "--seed", "7", "--threads", "2"]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["scenario"]["seed"] == 7


def test_diagnose_needs_field(tmp_path):
    """Test diagnose without --field is a config error."""
    assert main(["diagnose", "--config", CONSTANT, "--out", str(tmp_path)]) == 2


def test_diagnose_with_field(tmp_path):
    """Test diagnose of a field saved by run."""
    assert main(["run", "--config", CONSTANT, "--out", str(tmp_path / "run")]) == 0
    field = str(tmp_path / "run" / "field.csv")
    assert main(["diagnose", "--config", CONSTANT, "--out", str(tmp_path / "diag"), "--field", field]) == 0
    assert (tmp_path / "diag" / "regularity.csv").exists()


def test_version(capsys):
    """Test --version prints the package version."""
    with pytest.raises(SystemExit) as exc_info:
        main(["--version"])
    assert exc_info.value.code == 0
    assert capsys.readouterr().out.startswith("splitmap ")


def test_version_matches_pyproject():
    """Test the package version agrees with the project manifest."""
    with open(Path(__file__).resolve().parent.parent / "pyproject.toml", "rb") as f:
        assert __version__ == tomllib.load(f)["project"]["version"]
