"""splitmap - harmonic maps and heat flows across a transmission interface."""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path


def _read_project_version() -> str:
    """Installed distribution version, else the one in a source checkout's pyproject.toml."""
    try:
        return version("splitmap")
    except PackageNotFoundError:
        pyproject = Path(__file__).resolve().parent.parent / "pyproject.toml"
        with open(pyproject, "rb") as f:
            return tomllib.load(f)["project"]["version"]


__version__ = _read_project_version()
