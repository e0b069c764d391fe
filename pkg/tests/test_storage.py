"""Tests for run artifact storage."""

import csv
import json

import numpy as np
import pytest

from splitmap.grid import CoupledField, Side, SplitGrid
from splitmap.storage import RunStorage, StorageError, read_field


@pytest.fixture
def storage(tmp_path):
    """Create a storage instance rooted in a temporary directory."""
    return RunStorage(str(tmp_path / "run"))


@pytest.fixture
def field():
    """Smooth circle-valued field on a small 2-D grid."""
    grid = SplitGrid(2, 0.25)

    def f(x):
        theta = 0.3 * x[..., 0] + 0.1 * x[..., 1]
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    return CoupledField.from_functions(grid, f, f)


def test_write_csv(storage):
    """Test CSV rows are written with a header and tracked."""
    path = storage.write_csv("table.csv", [{"a": 1, "b": 0.5}, {"a": 2, "b": 0.25}])
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["a"] for r in rows] == ["1", "2"]
    assert float(rows[1]["b"]) == 0.25
    assert storage.artifacts == ["table.csv"]


def test_write_csv_explicit_columns(storage):
    """Test missing keys are written as empty cells."""
    path = storage.write_csv("table.csv", [{"a": 1}], columns=["a", "b"])
    lines = path.read_text().splitlines()
    assert lines == ["a,b", "1,"]


def test_write_json_nested_dir(storage):
    """Test JSON documents are sorted and parent directories created."""
    path = storage.write_json("sub/data.json", {"b": np.float64(0.5), "a": 1})
    assert json.loads(path.read_text()) == {"a": 1, "b": 0.5}
    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    assert storage.artifacts == ["sub/data.json"]


def test_rewrite_tracked_once(storage):
    """Test rewriting a file does not duplicate the artifact entry."""
    storage.write_json("data.json", {"a": 1})
    storage.write_json("data.json", {"a": 2})
    assert storage.artifacts == ["data.json"]
    assert json.loads((storage.root / "data.json").read_text()) == {"a": 2}
    assert not list(storage.root.glob("*.tmp"))


def test_field_round_trip(storage, field):
    """Test a saved field loads back onto the same grid."""
    path = storage.write_field(field)
    back = read_field(path, field.grid)
    assert back.max_difference(field) == 0.0
    header = path.read_text().splitlines()[0]
    assert header == "node,side,x0,x1,u0,u1"


def test_read_field_missing_file(tmp_path):
    """Test a missing field file raises StorageError."""
    with pytest.raises(StorageError):
        read_field(tmp_path / "nope.csv", SplitGrid(2, 0.25))


def test_read_field_grid_mismatch(storage, field):
    """Test a field saved on a finer grid does not fit a coarser one."""
    path = storage.write_field(field)
    with pytest.raises(StorageError):
        read_field(path, SplitGrid(2, 0.5))


def test_read_field_missing_nodes(storage, field):
    """Test a field saved on a coarser grid leaves nodes of a finer one empty."""
    path = storage.write_field(field)
    with pytest.raises(StorageError):
        read_field(path, SplitGrid(2, 0.125))


def test_read_field_bad_side(storage, field):
    """Test unknown side labels are rejected."""
    path = storage.write_field(field)
    text = path.read_text().replace(f",{Side.minus.value},", ",middle,", 1)
    path.write_text(text)
    with pytest.raises(StorageError):
        read_field(path, field.grid)
