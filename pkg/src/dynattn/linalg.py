"""Dense float64 matrix helpers and the DATN1 / CSV matrix file formats.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The helpers
here add the shape and finiteness checks the rest of the package relies on.
"""
from __future__ import annotations

import os
import struct

import numpy as np

DATN1_MAGIC = b"DATN1"
_HEADER = struct.Struct("<QQ")


class ShapeError(ValueError):
    pass


class NonFiniteError(ArithmeticError):
    """Raised when a computation would produce inf or NaN."""

    def __init__(self, index, message=None):
        self.index = tuple(int(k) for k in index)
        super().__init__(message or f"non-finite value at {self.index}")


def as_matrix(x, name="matrix") -> np.ndarray:
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {m.shape}")
    return m


def first_nonfinite(m: np.ndarray):
    """Index of the first non-finite entry in row-major order, or None."""
    bad = ~np.isfinite(m)
    if not bad.any():
        return None
    flat = int(np.flatnonzero(bad.ravel())[0])
    return np.unravel_index(flat, m.shape)


def matmul(lhs, rhs) -> np.ndarray:
    lhs = as_matrix(lhs, "lhs")
    rhs = as_matrix(rhs, "rhs")
    if lhs.shape[1] != rhs.shape[0]:
        raise ShapeError(f"cannot multiply {lhs.shape[0]}x{lhs.shape[1]} by {rhs.shape[0]}x{rhs.shape[1]}")
    return lhs @ rhs


def exp_elementwise(m) -> np.ndarray:
    m = as_matrix(m)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(m)
    idx = first_nonfinite(out)
    if idx is not None:
        raise NonFiniteError(idx, f"non-finite exp at {tuple(int(k) for k in idx)} (input {m[idx]!r})")
    return out


def row_sums(m) -> np.ndarray:
    return as_matrix(m).sum(axis=1)


# -- file formats -----------------------------------------------------------

def write_datn1(path, m) -> None:
    m = as_matrix(m)
    with open(path, "wb") as fh:
        fh.write(DATN1_MAGIC)
        fh.write(_HEADER.pack(*m.shape))
        fh.write(m.astype("<f8", copy=False).tobytes(order="C"))


def read_datn1(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != DATN1_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:5]!r}")
    if len(blob) < 5 + _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    rows, cols = _HEADER.unpack_from(blob, 5)
    if rows < 1 or cols < 1:
        raise ValueError(f"{path}: invalid shape {rows}x{cols}")
    payload = blob[5 + _HEADER.size:]
    if len(payload) != rows * cols * 8:
        raise ValueError(f"{path}: expected {rows * cols * 8} data bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)


def write_csv(path, m) -> None:
    m = as_matrix(m)
    lines = [f"{m.shape[0]},{m.shape[1]}"]
    lines += [",".join(repr(float(x)) for x in row) for row in m]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> np.ndarray:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    try:
        rows, cols = (int(t) for t in lines[0].split(","))
    except ValueError:
        raise ValueError(f"{path}: first line must be 'rows,cols'") from None
    if len(lines) - 1 != rows:
        raise ValueError(f"{path}: expected {rows} data rows, found {len(lines) - 1}")
    out = np.empty((rows, cols), dtype=np.float64)
    for r, line in enumerate(lines[1:]):
        vals = line.split(",")
        if len(vals) != cols:
            raise ValueError(f"{path}: row {r} has {len(vals)} values, expected {cols}")
        out[r] = [float(v) for v in vals]
    return as_matrix(out)


def read_matrix(path) -> np.ndarray:
    """Load a matrix, picking the format from the extension (``.csv`` or DATN1)."""
    if os.fspath(path).lower().endswith(".csv"):
        return read_csv(path)
    return read_datn1(path)


def write_matrix(path, m) -> None:
    if os.fspath(path).lower().endswith(".csv"):
        write_csv(path, m)
    else:
        write_datn1(path, m)
