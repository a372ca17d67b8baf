"""Deterministic, atomic output writers and the run manifest."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import struct
import tempfile
from pathlib import Path

import numpy as np

BINARY_MAGIC = b"BCT1"


def format_float(x) -> str:
    """17 significant digits, locale independent."""
    return format(float(x), ".17g")


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def atomic_write_bytes(path, data: bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        lines.append(",".join(_format_cell(v) for v in row))
    return atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, payload) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    return atomic_write_bytes(path, (text + "\n").encode())


def write_binary_trajectory(path, rows) -> Path:
    """``BCT1`` magic, little-endian u64 row count, then little-endian f64 rows."""
    rows = np.ascontiguousarray(np.atleast_2d(np.asarray(rows, dtype="<f8")))
    data = BINARY_MAGIC + struct.pack("<Q", rows.shape[0]) + rows.tobytes()
    return atomic_write_bytes(path, data)


def read_binary_trajectory(path, n_columns: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != BINARY_MAGIC:
        raise ValueError("not a BCT1 trajectory file")
    (n_rows,) = struct.unpack("<Q", data[4:12])
    return np.frombuffer(data[12:], dtype="<f8").reshape(n_rows, n_columns)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def module_versions() -> dict:
    import scipy

    from .. import __version__

    return {"boundary_ctrl": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out_dir, command: str, config: dict, files, verdicts: dict,
                   wall_clock: float) -> Path:
    """Manifest listing every output with its digest.

    The wall-clock time is kept in a separate ``timing.json`` so that the
    manifest itself is reproducible byte for byte.
    """
    out_dir = Path(out_dir)
    entries = {Path(f).name: sha256(f) for f in sorted(files, key=lambda p: Path(p).name)}
    write_json(out_dir / "timing.json", {"command": command, "wall_clock_seconds": wall_clock})
    manifest = {"command": command, "config": config, "versions": module_versions(),
                "files": entries, "verdicts": verdicts, "timing_file": "timing.json"}
    return write_json(out_dir / "manifest.json", manifest)
