"""Sample covariance evaluation without materializing the order-2p operator.

The sample covariance of n stacked observations is only ever accessed
through contractions against data slices: bilinear forms, and the d_q x d_q
matrices obtained by fixing one direction per mode except mode q. Optional
per-mode orthocomplement projectors restrict evaluation to the deflated
problem used for successive component extraction.

Also hosts the plug-in variance estimators: the noise level from the
residual energy after projecting out all fitted components in every mode,
and the per-component spike variance from the Rayleigh value minus the
noise level (clipped at zero with a flag).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CovarianceView",
    "VarianceEstimates",
    "bilinear",
    "contracted_matrix",
    "perp_projector",
    "estimate_sigma0_sq",
    "estimate_sigma_sq",
]

PROJ_SYM_TOL = 1e-10
PROJ_IDEM_TOL = 1e-8


def _as_observations(data) -> np.ndarray:
    obs = getattr(data, "observations", data)
    obs = np.asarray(obs, dtype=float)
    if obs.ndim < 2:
        raise ValueError("expected observations stacked as (n, d_1, ..., d_p)")
    return obs


class CovarianceView:
    """Read-only view of the sample covariance of a stacked data array.

    ``projections`` is an optional per-mode list of symmetric idempotent
    matrices applied to every direction before evaluation (pass ``None``
    entries for undeflated modes).
    """

    __slots__ = ("observations", "projections", "_mode_last")

    def __init__(self, data, projections=None):
        self.observations = _as_observations(data)
        self._mode_last = {}
        p = self.observations.ndim - 1
        if projections is None:
            self.projections = (None,) * p
        else:
            if len(projections) != p:
                raise ValueError(f"need one projection slot per mode ({p})")
            cleaned = []
            for q, proj in enumerate(projections):
                if proj is None:
                    cleaned.append(None)
                    continue
                proj = np.asarray(proj, dtype=float)
                d = self.observations.shape[q + 1]
                if proj.shape != (d, d):
                    raise ValueError(f"mode-{q} projection must be {d}x{d}")
                if np.max(np.abs(proj - proj.T)) > PROJ_SYM_TOL:
                    raise ValueError(f"mode-{q} projection is not symmetric")
                if np.max(np.abs(proj @ proj - proj)) > PROJ_IDEM_TOL:
                    raise ValueError(f"mode-{q} projection is not idempotent")
                cleaned.append(proj)
            self.projections = tuple(cleaned)

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.observations.shape[1:]

    @property
    def order(self) -> int:
        return self.observations.ndim - 1

    def project(self, q: int, v: np.ndarray) -> np.ndarray:
        proj = self.projections[q]
        return v if proj is None else proj @ v

    def mode_last(self, q: int) -> np.ndarray:
        """Contiguous copy with data mode q moved last, cached per mode.

        Makes the first (and most expensive) single-mode contraction a
        plain matmul with no per-call transposition copies.
        """
        cached = self._mode_last.get(q)
        if cached is None:
            cached = np.ascontiguousarray(np.moveaxis(self.observations, q + 1, -1))
            self._mode_last[q] = cached
        return cached


def _check_direction(view: CovarianceView, q: int, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (view.dims[q],):
        raise ValueError(f"mode-{q} direction has shape {v.shape}, expected ({view.dims[q]},)")
    return v


def _contract_all(view: CovarianceView, directions) -> np.ndarray:
    """Scores <X_i, w_1 x ... x w_p> for all i, projectors applied."""
    if len(directions) != view.order:
        raise ValueError("one direction per mode required")
    vecs = [
        view.project(q, _check_direction(view, q, v)) for q, v in enumerate(directions)
    ]
    # contract mode 0 against the cached layout (one clean matmul over the
    # full data), the rest against the much smaller intermediates
    base = view.mode_last(0)
    n = base.shape[0]
    out = (base.reshape(n, -1, view.dims[0]) @ vecs[0]).reshape((n,) + view.dims[1:])
    for w in vecs[1:]:
        out = np.tensordot(out, w, axes=([1], [0]))
    return out


def bilinear(view: CovarianceView, ws, vs) -> float:
    """Evaluate the covariance bilinear form at two rank-one directions.

    Returns ``mean_i <X_i, (x)ws> * <X_i, (x)vs>``; symmetric in its two
    arguments (identical summation order) and nonnegative when ``ws == vs``.
    """
    a = _contract_all(view, ws)
    b = _contract_all(view, vs)
    return float(np.mean(a * b))


def contracted_matrix(view: CovarianceView, directions, q: int) -> np.ndarray:
    """The symmetric PSD d_q x d_q matrix with all modes but q contracted.

    ``directions`` is a full per-mode list; entry ``q`` is ignored (may be
    None). Equals ``mean_i z_i z_i^T`` with ``z_i`` the projected i-th
    observation contracted along the fixed directions.
    """
    if not 0 <= q < view.order:
        raise ValueError(f"mode {q} out of range")
    if len(directions) != view.order:
        raise ValueError("one direction slot per mode required")
    modes = [m for m in range(view.order) if m != q]
    if not modes:
        out = view.observations  # vector data: nothing to contract
    else:
        vecs = {
            m: view.project(m, _check_direction(view, m, directions[m])) for m in modes
        }
        # first contraction runs over the full data; use the cached layout
        # of the first fixed mode, then shrink via tensordot in increasing
        # order
        first = modes[0]
        base = view.mode_last(first)
        n = base.shape[0]
        rest = tuple(d for mode, d in enumerate(view.dims) if mode != first)
        out = (base.reshape(n, -1, view.dims[first]) @ vecs[first]).reshape((n,) + rest)
        # axis of a mode in `out`: relative order is kept, `first` is
        # removed, and every already-contracted smaller mode shifts it down
        for pos, mode in enumerate(modes[1:]):
            axis = (mode if mode < first else mode - 1) - pos
            out = np.tensordot(out, vecs[mode], axes=([axis + 1], [0]))
    z = out  # (n, d_q)
    proj = view.projections[q]
    if proj is not None:
        z = z @ proj
    mat = (z.T @ z) / view.n
    return (mat + mat.T) / 2.0


def perp_projector(vectors, dim: int) -> np.ndarray:
    """Orthocomplement projector of span{vectors} in R^dim (exactly idempotent
    up to the QR factorization's accuracy)."""
    if not vectors:
        return np.eye(dim)
    basis = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
    if basis.shape[0] != dim:
        raise ValueError("vector length does not match dim")
    q_mat, _ = np.linalg.qr(basis)
    proj = np.eye(dim) - q_mat @ q_mat.T
    return (proj + proj.T) / 2.0


def fitted_perp_projections(fitted, dims) -> list[np.ndarray]:
    """Per-mode orthocomplement projectors of the fitted components' spans."""
    p = len(dims)
    return [
        perp_projector([c.factors[q] for c in fitted], dims[q])
        for q in range(p)
    ]


def estimate_sigma0_sq(data, fitted) -> float:
    """Noise variance from the residual energy off the fitted spans.

    Projects every observation onto the orthocomplement of the fitted
    components in every mode and averages the squared residual entries,
    normalizing by ``n * prod_q (d_q - r)``.
    """
    obs = _as_observations(data)
    dims = obs.shape[1:]
    r = len(fitted)
    if r >= min(dims):
        raise ValueError("noise estimation needs r < every mode dimension")
    projections = fitted_perp_projections(fitted, dims)
    resid = obs
    for q, proj in enumerate(projections):
        resid = np.tensordot(resid, proj, axes=([q + 1], [1]))
        resid = np.moveaxis(resid, -1, q + 1)
    denom = obs.shape[0] * float(np.prod([d - r for d in dims]))
    return float(np.sum(resid * resid) / denom)


def estimate_sigma_sq(data, fitted_k, sigma0_sq_hat: float) -> tuple[float, bool]:
    """Spike variance of one fitted component: Rayleigh value minus noise.

    Returns ``(max(value, 0), clipped)``; the flag reports when the
    subtraction went negative, in which case downstream inference must be
    declared unavailable rather than returning garbage.
    """
    view = CovarianceView(data)
    rayleigh = bilinear(view, fitted_k.factors, fitted_k.factors)
    value = rayleigh - float(sigma0_sq_hat)
    if value < 0.0:
        return 0.0, True
    return value, False


@dataclass
class VarianceEstimates:
    """Plug-in noise and spike variance estimates with clip flags."""

    sigma0_sq: float
    sigma_sq: np.ndarray
    clipped: tuple[bool, ...]

    @classmethod
    def estimate(cls, data, fitted) -> "VarianceEstimates":
        s0 = estimate_sigma0_sq(data, fitted)
        values, flags = [], []
        for comp in fitted:
            v, c = estimate_sigma_sq(data, comp, s0)
            values.append(v)
            flags.append(c)
        return cls(s0, np.asarray(values), tuple(flags))

    def permuted(self, order) -> "VarianceEstimates":
        order = list(order)
        return VarianceEstimates(
            self.sigma0_sq,
            self.sigma_sq[order],
            tuple(self.clipped[i] for i in order),
        )

    def to_dict(self) -> dict:
        return {
            "sigma0_sq": self.sigma0_sq,
            "sigma_sq": self.sigma_sq.tolist(),
            "clipped": list(self.clipped),
        }
