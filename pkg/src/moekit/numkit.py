"""Minimal dense linear algebra for the quantizer.

Matrices are two-dimensional numpy arrays of real floats. ``ensure_matrix``
is the single constructor: everything else in the package funnels inputs
through it, so NaN and Inf entries are rejected at the boundary and the rest
of the code can assume finite float64 data in row-major order.

The Cholesky factorization is written out by hand rather than delegated to
LAPACK because callers need the index of the failing pivot to drive damping
escalation. Products and triangular solves are delegated to numpy and scipy.

Binary interchange format: a 16-byte header (magic bytes ``MOEK``, then row
count, column count and a dtype tag as little-endian u32, tag 0 = float32
and 1 = float64) followed by the row-major little-endian payload.
"""

from __future__ import annotations

import math
import struct

import numpy as np
from scipy.linalg import solve_triangular

from .errors import FormatError, NotPositiveDefiniteError

MAGIC = b"MOEK"
_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAG_FOR = {"float32": 0, "float64": 1}

# Symmetry tolerance used by the factorization entry points, relative to the
# largest entry magnitude (with an absolute floor of 1).
SYMMETRY_TOL = 1e-9


def ensure_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and normalize a 2-D real matrix to C-contiguous float64.

    Rejects empty matrices and any non-finite entry. Returns a new array
    only when conversion is required.
    """
    out = np.asarray(a)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {out.shape}")
    if not np.issubdtype(out.dtype, np.floating) and not np.issubdtype(
        out.dtype, np.integer
    ):
        raise ValueError(f"{name} must be real-valued, got dtype {out.dtype}")
    out = np.ascontiguousarray(out, dtype=np.float64)
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite entries")
    return out


def matmul(a, b) -> np.ndarray:
    """Product of two matrices with an explicit conformability check."""
    a = ensure_matrix(a, "a")
    b = ensure_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def _check_square_symmetric(h: np.ndarray, name: str) -> None:
    if h.shape[0] != h.shape[1]:
        raise ValueError(f"{name} must be square, got shape {h.shape}")
    tol = SYMMETRY_TOL * max(1.0, float(np.abs(h).max()))
    asym = float(np.abs(h - h.T).max())
    if asym > tol:
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:g})")


def cholesky(h) -> np.ndarray:
    """Lower-triangular L with L @ L.T == h for symmetric positive definite h.

    Raises NotPositiveDefiniteError carrying the failing pivot index when a
    diagonal pivot is not strictly positive.
    """
    h = ensure_matrix(h, "h")
    _check_square_symmetric(h, "h")
    n = h.shape[0]
    low = np.zeros_like(h)
    for j in range(n):
        d = h[j, j] - low[j, :j] @ low[j, :j]
        if not math.isfinite(d) or d <= 0.0:
            raise NotPositiveDefiniteError(j, float(d))
        low[j, j] = math.sqrt(d)
        if j + 1 < n:
            low[j + 1 :, j] = (h[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def spd_inverse(h) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via its Cholesky factor.

    The result is symmetrized before returning so downstream code can rely
    on exact symmetry.
    """
    low = cholesky(h)
    eye = np.eye(low.shape[0])
    half = solve_triangular(low, eye, lower=True)
    inv = solve_triangular(low.T, half, lower=False)
    return (inv + inv.T) / 2.0


def write_matrix(path, a, dtype: str = "float64") -> None:
    """Write a matrix in the MOEK binary format.

    ``dtype`` selects the stored precision; float32 storage rounds the
    payload and raises if a value is not representable.
    """
    a = ensure_matrix(a, "matrix")
    name = np.dtype(dtype).name
    if name not in _TAG_FOR:
        raise ValueError(f"unsupported dtype {dtype!r}, expected float32 or float64")
    tag = _TAG_FOR[name]
    payload = np.ascontiguousarray(a, dtype=_DTYPE_TAGS[tag])
    if not np.isfinite(payload).all():
        raise ValueError("matrix is not representable at the requested precision")
    header = MAGIC + struct.pack("<III", a.shape[0], a.shape[1], tag)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    """Read a matrix from the MOEK binary format.

    Returns the array at its stored precision (float32 or float64). NaN and
    Inf payloads are rejected.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    rows, cols, tag = struct.unpack("<III", blob[4:16])
    if tag not in _DTYPE_TAGS:
        raise FormatError(f"{path}: unknown dtype tag {tag}")
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: empty matrix {rows}x{cols}")
    dt = _DTYPE_TAGS[tag]
    expected = rows * cols * dt.itemsize
    if len(blob) - 16 != expected:
        raise FormatError(
            f"{path}: payload is {len(blob) - 16} bytes, expected {expected}"
        )
    out = np.frombuffer(blob, dtype=dt, offset=16).reshape(rows, cols)
    if not np.isfinite(out).all():
        raise FormatError(f"{path}: payload contains non-finite entries")
    # frombuffer views are read-only; hand back an owned, writable array
    return out.copy()
