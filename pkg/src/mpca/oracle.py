"""Brute-force references for validation.

Not used by any production code path: the dense eigensolver route checks
the power-iteration/ALS route and the exhaustive grid search certifies the
rank-one maximization globally on tiny instances. Problem sizes are
guarded accordingly.
"""

from __future__ import annotations

import numpy as np

__all__ = ["dense_covariance", "dense_eig", "grid_best_rank_one"]

MAX_DENSE_DIM = 4096
SYM_TOL = 1e-12
PSD_TOL = 1e-8
EIG_RESIDUAL_TOL = 1e-8


def _observations(data) -> np.ndarray:
    obs = getattr(data, "observations", data)
    return np.asarray(obs, dtype=float)


def dense_covariance(data) -> np.ndarray:
    """The D x D sample covariance of the vectorized observations."""
    obs = _observations(data)
    n = obs.shape[0]
    flat = obs.reshape(n, -1)
    d = flat.shape[1]
    if d > MAX_DENSE_DIM:
        raise ValueError(f"dense covariance guard: D={d} exceeds {MAX_DENSE_DIM}")
    c = flat.T @ flat / n
    c = (c + c.T) / 2.0
    return c


def dense_eig(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full symmetric eigendecomposition, eigenvalues descending.

    Backed by LAPACK via numpy; residuals are verified so a silent solver
    failure cannot leak into the checks that rely on this oracle.
    """
    c = np.asarray(c, dtype=float)
    d = c.shape[0]
    if d > MAX_DENSE_DIM:
        raise ValueError(f"dense eigensolver guard: D={d} exceeds {MAX_DENSE_DIM}")
    if np.max(np.abs(c - c.T)) > SYM_TOL * max(1.0, float(np.max(np.abs(c)))):
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(c)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    scale = max(1.0, float(abs(vals[0])))
    resid = np.max(np.abs(c @ vecs - vecs * vals))
    if resid > EIG_RESIDUAL_TOL * scale:
        raise RuntimeError(f"eigendecomposition residual {resid!r} too large")
    return vals, vecs


def grid_best_rank_one(data, step: float) -> tuple[tuple[float, float], float]:
    """Exhaustive rank-one variance maximization for 2x2 matrix data.

    Scans ``w1 = (cos a1, sin a1)``, ``w2 = (cos a2, sin a2)`` over a step
    grid of [0, pi)^2 and returns the best angles and the achieved sample
    variance. Quadratic in the grid size, so only sensible for validation.
    """
    obs = _observations(data)
    if obs.ndim != 3 or obs.shape[1:] != (2, 2):
        raise ValueError("grid search supports (n, 2, 2) data only")
    if step <= 0:
        raise ValueError("step must be positive")
    angles = np.arange(0.0, np.pi, step)
    cos2, sin2 = np.cos(angles), np.sin(angles)
    basis2 = np.stack([cos2, sin2])  # (2, m)
    best = (-np.inf, 0, 0)
    block = 512
    for lo in range(0, angles.shape[0], block):
        a1 = angles[lo : lo + block]
        w1 = np.stack([np.cos(a1), np.sin(a1)], axis=1)  # (b, 2)
        t = np.einsum("nij,bi->bnj", obs, w1)  # (b, n, 2)
        s11 = np.mean(t[:, :, 0] ** 2, axis=1)
        s12 = np.mean(t[:, :, 0] * t[:, :, 1], axis=1)
        s22 = np.mean(t[:, :, 1] ** 2, axis=1)
        objective = (
            s11[:, None] * (cos2 * cos2)[None, :]
            + 2.0 * s12[:, None] * (cos2 * sin2)[None, :]
            + s22[:, None] * (sin2 * sin2)[None, :]
        )
        idx = np.unravel_index(int(np.argmax(objective)), objective.shape)
        val = float(objective[idx])
        if val > best[0]:
            best = (val, lo + idx[0], idx[1])
    value, i1, i2 = best
    return (float(angles[i1]), float(angles[i2])), value
