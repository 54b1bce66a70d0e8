"""Dense multilinear primitives.

A p-way observation is a plain ``numpy.ndarray`` with ``float64`` entries,
shape ``(d_1, ..., d_p)`` and C (row-major) index order. Indices are 0-based
in code and 1-based in file formats and reports. The degenerate order
``p = 1`` (vector data) is supported everywhere.

The long CSV format used for tensor interchange has one header row
``i1,i2,...,ip,value`` followed by one row per stored cell, indices 1-based.
Cells absent from the file default to a fill value (0 unless requested
otherwise), which is how sparse exports and missing data are represented.
"""

from __future__ import annotations

import csv
from functools import reduce
from pathlib import Path

import numpy as np

__all__ = [
    "unit_vector",
    "outer_product",
    "mode_product",
    "inner",
    "frobenius_norm",
    "sin_angle",
    "read_long_csv",
    "write_long_csv",
]

UNIT_NORM_TOL = 1e-12


def unit_vector(coords) -> np.ndarray:
    """Validate and return a unit-length 1-D float64 vector.

    Parameters
    ----------
    coords : array_like
        Vector whose Euclidean norm must equal 1 within ``1e-12``.

    Returns
    -------
    numpy.ndarray
        A float64 copy of the input.

    Raises
    ------
    ValueError
        If the input is not 1-D or its norm is off by more than the
        tolerance.
    """
    v = np.asarray(coords, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("unit vector must be a nonempty 1-D array")
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"vector norm {norm!r} is not 1 within {UNIT_NORM_TOL}")
    return v.copy()


def normalized(coords) -> np.ndarray:
    """Return ``coords / ||coords||``; reject zero vectors."""
    v = np.asarray(coords, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def outer_product(vectors) -> np.ndarray:
    """Outer product of one vector per mode.

    Entry ``(i_1, ..., i_p)`` of the result is ``prod_q vectors[q][i_q]``.
    For unit-length inputs the result has Frobenius norm 1.

    Parameters
    ----------
    vectors : sequence of array_like
        One 1-D vector per mode; must be nonempty.
    """
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    if not vecs:
        raise ValueError("outer_product needs at least one vector")
    for v in vecs:
        if v.ndim != 1:
            raise ValueError("outer_product takes 1-D vectors only")
    return reduce(np.multiply.outer, vecs)


def mode_product(t, q: int, m) -> np.ndarray:
    """Contract mode ``q`` of ``t`` against a matrix or vector.

    With a matrix ``A`` of shape ``(m, d_q)`` the result keeps order p and
    has ``[T x_q A]_{..j..} = sum_{i_q} T_{..i_q..} A[j, i_q]``; with a
    vector the order drops by one.

    Raises
    ------
    ValueError
        If the contracted dimension of ``m`` does not match ``t.shape[q]``.
    """
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    if not 0 <= q < t.ndim:
        raise ValueError(f"mode {q} out of range for order-{t.ndim} array")
    if m.ndim == 1:
        if m.shape[0] != t.shape[q]:
            raise ValueError(
                f"vector length {m.shape[0]} does not match mode-{q} size {t.shape[q]}"
            )
        return np.tensordot(t, m, axes=([q], [0]))
    if m.ndim == 2:
        if m.shape[1] != t.shape[q]:
            raise ValueError(
                f"matrix columns {m.shape[1]} do not match mode-{q} size {t.shape[q]}"
            )
        out = np.tensordot(t, m, axes=([q], [1]))
        return np.moveaxis(out, -1, q)
    raise ValueError("mode_product contracts against a vector or a matrix")


def inner(a, b) -> float:
    """Sum of entrywise products of two identically shaped arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def frobenius_norm(t) -> float:
    """Euclidean norm of the vectorized array."""
    return float(np.linalg.norm(np.asarray(t, dtype=float)))


def sin_angle(a, b) -> float:
    """Sine of the acute angle between two arrays (via vectorization).

    Invariant to sign flips of either argument and symmetric in them; lies
    in ``[0, 1]``. Zero arrays are rejected. Computed as the norm of the
    orthogonal rejection rather than ``sqrt(1 - cos^2)``, which loses all
    accuracy below ~1e-8 to cancellation.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("sin_angle is undefined for zero vectors")
    a_hat = a / na
    b_hat = b / nb
    c = float(a_hat @ b_hat)
    # evaluating both rejections keeps the result exactly symmetric
    s = min(
        float(np.linalg.norm(a_hat - c * b_hat)),
        float(np.linalg.norm(b_hat - c * a_hat)),
    )
    return min(s, 1.0)


def _format_value(x: float) -> str:
    # repr round-trips float64 exactly, which the CSV round-trip tests rely on
    return repr(float(x))


def write_long_csv(path, array, *, include_zeros: bool = True) -> None:
    """Write an array in long format (1-based indices, one row per cell).

    With ``include_zeros=False`` only nonzero cells are written; readers
    restore the omitted cells from their fill value.
    """
    arr = np.asarray(array, dtype=float)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{q + 1}" for q in range(arr.ndim)] + ["value"])
        for idx in np.ndindex(*arr.shape):
            val = arr[idx]
            if not include_zeros and val == 0.0:
                continue
            writer.writerow([i + 1 for i in idx] + [_format_value(val)])


def read_long_csv(path, dims=None, *, missing: float = 0.0) -> np.ndarray:
    """Read a long-format CSV into a dense array.

    Parameters
    ----------
    path : path-like
        CSV file with header ``i1,...,ip,value`` and 1-based indices.
    dims : sequence of int, optional
        Expected shape. When omitted the shape is inferred from the largest
        index seen per column.
    missing : float
        Fill value for cells absent from the file (default 0).

    Raises
    ------
    ValueError
        On malformed rows, duplicate cells, or indices outside ``dims``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: missing or too-short header")
        p = len(header) - 1
        entries: dict[tuple[int, ...], float] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise ValueError(f"{path}:{lineno}: expected {p + 1} columns, got {len(row)}")
            try:
                idx = tuple(int(c) - 1 for c in row[:p])
                val = float(row[p])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if any(i < 0 for i in idx):
                raise ValueError(f"{path}:{lineno}: indices are 1-based")
            if idx in entries:
                raise ValueError(f"{path}:{lineno}: duplicate cell {tuple(i + 1 for i in idx)}")
            entries[idx] = val
    if dims is None:
        if not entries:
            raise ValueError(f"{path}: empty file and no dims given")
        dims = tuple(max(i[q] for i in entries) + 1 for q in range(p))
    else:
        dims = tuple(int(d) for d in dims)
        if len(dims) != p:
            raise ValueError(f"{path}: file has {p} index columns, dims has {len(dims)}")
        for idx in entries:
            if any(i >= d for i, d in zip(idx, dims)):
                bad = tuple(i + 1 for i in idx)
                raise ValueError(f"{path}: cell {bad} outside dims {dims}")
    out = np.full(dims, float(missing))
    for idx, val in entries.items():
        out[idx] = val
    return out
