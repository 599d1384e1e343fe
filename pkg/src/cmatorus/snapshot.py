"""Binary field snapshots with a JSON sidecar.

Layout: a 32-byte header (magic ``b"CMAF"``, then little-endian u32
version, n, m, component count, then zero padding) followed by float64
little-endian values in row-major multi-index order, components fastest.
Hermitian matrix fields are stored as ``n`` real diagonals followed by the
real and imaginary parts of each entry above the diagonal.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .grid import TorusGrid

MAGIC = b"CMAF"
VERSION = 1
_HEADER = struct.Struct("<4sIIII12x")


class SnapshotError(ValueError):
    pass


def hermitian_to_components(H: np.ndarray) -> np.ndarray:
    n = H.shape[-1]
    comps = [H[..., i, i].real for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            comps += [H[..., i, j].real, H[..., i, j].imag]
    return np.stack(comps, axis=-1)


def components_to_hermitian(C: np.ndarray, n: int) -> np.ndarray:
    H = np.zeros(C.shape[:-1] + (n, n), dtype=complex)
    for i in range(n):
        H[..., i, i] = C[..., i]
    k = n
    for i in range(n):
        for j in range(i + 1, n):
            H[..., i, j] = C[..., k] + 1j * C[..., k + 1]
            H[..., j, i] = C[..., k] - 1j * C[..., k + 1]
            k += 2
    return H


def _as_components(grid: TorusGrid, field: np.ndarray) -> tuple[np.ndarray, str]:
    field = np.asarray(field)
    if field.shape == grid.shape:
        return field[..., None].astype("<f8"), "scalar"
    if field.shape == grid.shape + (grid.n, grid.n):
        return hermitian_to_components(field).astype("<f8"), "hermitian"
    raise SnapshotError(f"field shape {field.shape} is neither scalar nor Hermitian on {grid!r}")


def write_field(path, grid: TorusGrid, field: np.ndarray, role: str = "field", extra: dict | None = None) -> str:
    """Write ``field`` to ``path`` and ``path.json``; return the sha256 of the data."""
    path = Path(path)
    comps, kind = _as_components(grid, field)
    payload = np.ascontiguousarray(comps).tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, grid.n, grid.m, comps.shape[-1]))
        fh.write(payload)
    digest = hashlib.sha256(payload).hexdigest()
    sidecar = {"role": role, "kind": kind, "n": grid.n, "m": grid.m, "components": comps.shape[-1], "sha256": digest}
    if extra:
        sidecar.update(extra)
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return digest


def read_header(path) -> tuple[int, int, int]:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, n, m, ncomp = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    return n, m, ncomp


def read_field(path, grid: TorusGrid | None = None) -> tuple[np.ndarray, TorusGrid]:
    """Read a snapshot; Hermitian fields come back as ``(..., n, n)`` arrays."""
    n, m, ncomp = read_header(path)
    if grid is None:
        grid = TorusGrid(n, m)
    elif (grid.n, grid.m) != (n, m):
        raise SnapshotError(f"{path}: stored grid (n={n}, m={m}) does not match {grid!r}")
    data = np.fromfile(path, dtype="<f8", offset=_HEADER.size)
    if data.size != grid.size * ncomp:
        raise SnapshotError(f"{path}: expected {grid.size * ncomp} values, found {data.size}")
    data = data.reshape(grid.shape + (ncomp,))
    if ncomp == 1:
        return data[..., 0].astype(float), grid
    expected = n * n
    if ncomp != expected:
        raise SnapshotError(f"{path}: {ncomp} components is neither scalar nor Hermitian")
    return components_to_hermitian(data, n), grid


def field_hash(field: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(field).tobytes()).hexdigest()
