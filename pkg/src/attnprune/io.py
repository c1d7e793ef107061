"""File exchange formats.

Matrices travel as raw little-endian float32, row-major, with a JSON
sidecar ``{"rows": M, "cols": N, "heads": H}``; small matrices are also
accepted as header-free CSV. Scores are CSV ``index,value`` rows written
with 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionMismatchError

_F32 = np.dtype("<f4")


def default_meta_path(path) -> Path:
    return Path(str(path) + ".json")


def save_matrix(path, array: np.ndarray, meta_path=None) -> None:
    """Write a (rows, cols) or (heads, rows, cols) array plus its sidecar."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise DimensionMismatchError("expected a 2-D or 3-D array")
    heads, rows, cols = arr.shape
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    meta = {"rows": rows, "cols": cols, "heads": heads}
    Path(meta_path or default_meta_path(path)).write_text(
        json.dumps(meta), encoding="utf-8"
    )


def load_matrix(path, meta_path=None) -> np.ndarray:
    """Read a matrix file into a float64 (heads, rows, cols) array.

    ``.csv`` inputs are parsed as a single head with one row per line.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        rows = [
            [float(cell) for cell in line]
            for line in csv.reader(path.read_text(encoding="utf-8").splitlines())
            if line
        ]
        if not rows:
            raise ConfigError(f"{path}: empty CSV matrix")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise ConfigError(f"{path}: ragged CSV matrix")
        return np.asarray(rows, dtype=np.float64)[None]
    meta_file = Path(meta_path or default_meta_path(path))
    if not meta_file.exists():
        raise ConfigError(f"missing sidecar {meta_file} for {path}")
    meta = json.loads(meta_file.read_text(encoding="utf-8"))
    try:
        heads = int(meta.get("heads", 1))
        rows, cols = int(meta["rows"]), int(meta["cols"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad sidecar {meta_file}: {exc}") from exc
    raw = np.frombuffer(path.read_bytes(), dtype=_F32)
    if raw.size != heads * rows * cols:
        raise DimensionMismatchError(
            f"{path}: {raw.size} floats, sidecar promises {heads}x{rows}x{cols}"
        )
    return raw.reshape(heads, rows, cols).astype(np.float64)


def save_scores(path, values: np.ndarray) -> None:
    lines = ["index,value"]
    lines += [f"{i},{v:.17g}" for i, v in enumerate(np.asarray(values, dtype=np.float64))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _numeric_rows(path) -> list[list[str]]:
    rows = [r for r in csv.reader(Path(path).read_text(encoding="utf-8").splitlines()) if r]
    if rows:
        try:
            float(rows[0][-1])
        except ValueError:
            rows = rows[1:]  # header line
    return rows


def load_scores(path) -> np.ndarray:
    rows = _numeric_rows(path)
    if not rows:
        raise ConfigError(f"{path}: no score rows")
    return np.asarray([float(r[-1]) for r in rows], dtype=np.float64)


def load_series(path) -> np.ndarray:
    """One float per line (or the last CSV column), e.g. a variance trace."""
    return load_scores(path)
