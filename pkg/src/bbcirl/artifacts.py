"""File helpers shared by every stage: atomic writes, hashing, grid exports."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
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


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def header_lines(meta: dict) -> list[str]:
    """``# key=value`` lines in insertion order."""
    return [f"# {k}={v}" for k, v in meta.items()]


def fmt(x: float) -> str:
    # repr gives the shortest string that round-trips exactly
    return repr(float(x))


def grid_csv(values, width: int, meta: dict | None = None) -> str:
    grid = np.asarray(values, dtype=np.float64).reshape(-1, width)
    lines = header_lines(meta or {})
    lines += [",".join(fmt(v) for v in row) for row in grid]
    return "\n".join(lines) + "\n"


def write_grid_csv(path, values, width: int, meta: dict | None = None) -> None:
    atomic_write_text(path, grid_csv(values, width, meta))


def read_grid_csv(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append([float(v) for v in line.split(",")])
    return np.array(rows)


def write_pgm(path, values, width: int, scale: int = 32, meta: dict | None = None) -> None:
    """Plain (P2) graymap; values are min-max stretched to 0..255 and each
    cell becomes a ``scale`` x ``scale`` block. ``meta`` goes into comment lines."""
    grid = np.asarray(values, dtype=np.float64).reshape(-1, width)
    lo, hi = grid.min(), grid.max()
    g = np.full(grid.shape, 128, dtype=int) if hi == lo else np.rint(255 * (grid - lo) / (hi - lo)).astype(int)
    img = np.kron(g, np.ones((scale, scale), dtype=int))
    lines = ["P2", *header_lines(meta or {}), f"{img.shape[1]} {img.shape[0]}", "255"]
    lines += [" ".join(map(str, row)) for row in img]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_manifest(path, meta: dict) -> None:
    atomic_write_text(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
