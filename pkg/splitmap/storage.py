"""Run artifact storage: CSV tables and JSON documents written atomically."""

import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .config import get_settings
from .errors import SplitmapError
from .grid import SIDES, CoupledField, Side, SplitGrid

logger = logging.getLogger(__name__)


class StorageError(SplitmapError):
    """Artifact could not be written or read."""
    pass


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (np.integer, np.bool_)):
        return str(int(value))
    return str(value)


class RunStorage:
    """Artifact directory of one run; tracks every file written, relative to the root."""

    def __init__(self, root: Optional[str] = None):
        self.root = Path(root or get_settings().output_dir)
        self.artifacts: list[str] = []

    def _ensure_dir(self, path: Path) -> None:
        """Ensure the parent directory exists."""
        path.parent.mkdir(parents=True, exist_ok=True)

    def _write_text(self, name: str, text: str) -> Path:
        """Write via a temp file in the same directory, then rename over the target."""
        path = self.root / name
        self._ensure_dir(path)
        fd, tmp_path = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as tmp:
                tmp.write(text)
            os.replace(tmp_path, path)
        except OSError as exc:
            if os.path.exists(tmp_path):
                os.unlink(tmp_path)
            raise StorageError(f"Failed to write {path}: {exc}", path=str(path)) from exc
        if name not in self.artifacts:
            self.artifacts.append(name)
        logger.debug(f"Wrote {path}")
        return path

    def write_csv(self, name: str, rows: Iterable[dict], columns: Optional[list[str]] = None) -> Path:
        rows = list(rows)
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row.get(c, "")) for c in columns])
        return self._write_text(name, buf.getvalue())

    def write_json(self, name: str, data: dict) -> Path:
        return self._write_text(name, json.dumps(data, indent=2, sort_keys=True, default=_format) + "\n")

    def write_field(self, u: CoupledField, name: str = "field.csv") -> Path:
        """One row per (node, side): node,side,x0..x{n-1},u0..u{k-1}."""
        grid = u.grid
        columns = (["node", "side"] + [f"x{i}" for i in range(grid.dim)]
                   + [f"u{i}" for i in range(u.components)])
        rows = []
        for side in SIDES:
            coords = grid.coordinates(side).reshape(-1, grid.dim)
            values = u.flat(side)
            for node, (x, v) in enumerate(zip(coords, values)):
                row = {"node": node, "side": side.value}
                row.update({f"x{i}": c for i, c in enumerate(x)})
                row.update({f"u{i}": c for i, c in enumerate(v)})
                rows.append(row)
        return self.write_csv(name, rows, columns)


def read_field(path: str | Path, grid: SplitGrid) -> CoupledField:
    """Load a field.csv written by `RunStorage.write_field` onto a matching grid."""
    path = Path(path)
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            rows = list(reader)
            columns = reader.fieldnames or []
    except OSError as exc:
        raise StorageError(f"Cannot read field file {path}: {exc}", path=str(path)) from exc
    value_cols = [c for c in columns if c.startswith("u")]
    arrays = {s: np.full((grid.n_nodes(s), len(value_cols)), np.nan) for s in SIDES}
    try:
        for row in rows:
            side = Side(row["side"])
            arrays[side][int(row["node"])] = [float(row[c]) for c in value_cols]
    except (KeyError, ValueError, IndexError) as exc:
        raise StorageError(f"Field file {path} does not match the grid: {exc}", path=str(path)) from exc
    if any(np.isnan(a).any() for a in arrays.values()):
        raise StorageError(f"Field file {path} is missing nodes for this grid", path=str(path))
    return CoupledField.from_flat(grid, arrays[Side.plus], arrays[Side.minus])
