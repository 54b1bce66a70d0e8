"""Spiked factor model: ground truth construction and data generation.

An observation is ``X = sum_k sigma_k * theta_k * U_k + sigma0 * E`` where
the ``U_k`` are unit rank-one arrays that are completely orthogonal (mode
vectors orthogonal in every mode simultaneously), the factor loadings
``theta`` and the noise entries are i.i.d. with mean 0 and variance 1, and
``sigma_1 >= ... >= sigma_r > 0`` (ties allowed). The variance captured by
component k is ``lambda_k = sigma_k**2 + sigma0**2``.

Two noise/factor distributions are supported: ``"gaussian"`` (standard
normal) and ``"centered-poisson"`` (Poisson(1) - 1, still mean 0 and
variance 1), the latter for robustness experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensors
from .seeding import stream

__all__ = [
    "RankOnePC",
    "SpikedModel",
    "SampleSet",
    "NOISE_KINDS",
    "make_components",
    "make_model",
    "sample",
    "model_from_config",
    "model_to_config",
]

NOISE_KINDS = ("gaussian", "centered-poisson")

COMPONENT_MODES = ("rotated", "random")

ORTHO_TOL = 1e-12


@dataclass(frozen=True)
class RankOnePC:
    """A unit rank-one principal component: one unit vector per mode.

    ``value`` is the variance attached to the component: the population
    eigenvalue for ground truth, or the achieved sample objective when
    produced by the estimator.
    """

    factors: tuple[np.ndarray, ...]
    value: float = 0.0

    def __post_init__(self):
        factors = tuple(tensors.unit_vector(f) for f in self.factors)
        object.__setattr__(self, "factors", factors)
        if self.value < 0:
            raise ValueError("component value must be nonnegative")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def order(self) -> int:
        return len(self.factors)

    def dense(self) -> np.ndarray:
        """Materialize the rank-one array (Frobenius norm 1)."""
        return tensors.outer_product(self.factors)

    def to_dict(self) -> dict:
        return {"value": self.value, "factors": [f.tolist() for f in self.factors]}


@dataclass(frozen=True)
class SpikedModel:
    """Ground-truth generator parameters."""

    dims: tuple[int, ...]
    sigma: tuple[float, ...]
    sigma0: float
    components: tuple[RankOnePC, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        sigma = tuple(float(s) for s in self.sigma)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "components", tuple(self.components))
        if any(d < 1 for d in dims):
            raise ValueError("all mode dimensions must be positive")
        if len(self.components) != len(sigma):
            raise ValueError("one sigma per component required")
        if any(s <= 0 for s in sigma):
            raise ValueError("spike scales must be positive")
        if any(sigma[i] < sigma[i + 1] for i in range(len(sigma) - 1)):
            raise ValueError("spike scales must be non-increasing")
        if self.sigma0 < 0:
            raise ValueError("noise scale must be nonnegative")
        if len(sigma) > min(dims):
            raise ValueError("more components than the smallest mode dimension")
        for comp in self.components:
            if comp.dims != dims:
                raise ValueError("component dims do not match model dims")
        for a in range(len(self.components)):
            for b in range(a + 1, len(self.components)):
                for q in range(len(dims)):
                    dot = float(
                        self.components[a].factors[q] @ self.components[b].factors[q]
                    )
                    if abs(dot) > ORTHO_TOL:
                        raise ValueError(
                            f"components {a} and {b} not orthogonal in mode {q}"
                        )

    @property
    def r(self) -> int:
        return len(self.sigma)

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def lambdas(self) -> tuple[float, ...]:
        """Per-component variances sigma_k**2 + sigma0**2."""
        return tuple(s * s + self.sigma0 * self.sigma0 for s in self.sigma)


@dataclass
class SampleSet:
    """A sample of n observations, stacked as an ``(n, d_1, ..., d_p)`` array.

    Factor loadings and noise arrays are retained when available (synthetic
    data) for debugging and diagnostics.
    """

    observations: np.ndarray
    factors: np.ndarray | None = None
    noise: np.ndarray | None = None

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=float)
        if self.observations.ndim < 2:
            raise ValueError("observations must stack at least one data mode")

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.observations.shape[1:]

    def subset(self, index) -> "SampleSet":
        return SampleSet(self.observations[index])

    def to_long_csv(self, path, *, include_zeros: bool = True) -> None:
        """Export in long format; the observation index is the first column."""
        tensors.write_long_csv(path, self.observations, include_zeros=include_zeros)

    @classmethod
    def from_long_csv(cls, path, dims=None, *, missing: float = 0.0) -> "SampleSet":
        return cls(tensors.read_long_csv(path, dims, missing=missing))


def _rotated_components(dims, r: int) -> list[tuple[np.ndarray, ...]]:
    # Fixed 30-degree rotated pair in mode 1, canonical axes elsewhere.
    if r > 2:
        raise ValueError("rotated component mode defines at most two components")
    if dims[0] < 2 and r == 2:
        raise ValueError("rotated pair needs first mode dimension >= 2")
    c, s = np.sqrt(3.0) / 2.0, 0.5
    heads = [np.array([c, s]), np.array([-s, c])]
    out = []
    for k in range(r):
        factors = []
        for q, d in enumerate(dims):
            v = np.zeros(d)
            if q == 0:
                v[: heads[k].shape[0]] = heads[k][: min(2, d)]
                if d == 1:
                    v[0] = 1.0
            else:
                v[k] = 1.0
            factors.append(v)
        out.append(tuple(factors))
    return out


def _fix_column_signs(q_mat: np.ndarray) -> np.ndarray:
    # Deterministic sign: largest-magnitude entry of each column is positive.
    out = q_mat.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            out[:, j] = -col
    return out


def _random_components(dims, r: int, rng: np.random.Generator) -> list[tuple[np.ndarray, ...]]:
    per_mode = []
    for d in dims:
        g = rng.standard_normal((d, r))
        q_mat, _ = np.linalg.qr(g)
        per_mode.append(_fix_column_signs(q_mat[:, :r]))
    return [tuple(per_mode[q][:, k] for q in range(len(dims))) for k in range(r)]


def make_components(dims, r: int, mode: str = "random", seed: int | None = None):
    """Build ``r`` pairwise completely orthogonal unit rank-one components.

    ``mode="rotated"`` gives the fixed benchmark pair (a 30-degree rotated
    basis pair in mode 1, canonical basis vectors elsewhere); it is
    deterministic and ignores the seed. ``mode="random"`` orthonormalizes
    seeded Gaussian draws per mode, so complete orthogonality holds exactly
    and the same seed reproduces the same components.
    """
    dims = tuple(int(d) for d in dims)
    if r < 1:
        raise ValueError("need at least one component")
    if r > min(dims):
        raise ValueError(
            f"r={r} components cannot be completely orthogonal with min dim {min(dims)}"
        )
    if mode == "rotated":
        raw = _rotated_components(dims, r)
    elif mode == "random":
        rng = stream(0 if seed is None else seed, "data")
        raw = _random_components(dims, r, rng)
    else:
        raise ValueError(f"unknown component mode {mode!r}; use one of {COMPONENT_MODES}")
    return [RankOnePC(factors) for factors in raw]


def make_model(
    dims,
    sigma,
    sigma0: float,
    *,
    components_mode: str = "random",
    seed: int | None = None,
) -> SpikedModel:
    """Convenience constructor: build components and attach eigenvalues."""
    sigma = tuple(float(s) for s in sigma)
    comps = make_components(dims, len(sigma), components_mode, seed)
    lam = [s * s + float(sigma0) ** 2 for s in sigma]
    comps = [RankOnePC(c.factors, value=l) for c, l in zip(comps, lam)]
    return SpikedModel(tuple(dims), sigma, float(sigma0), tuple(comps))


def _draws(rng: np.random.Generator, kind: str, shape) -> np.ndarray:
    if kind == "gaussian":
        return rng.standard_normal(shape)
    if kind == "centered-poisson":
        return rng.poisson(1.0, shape).astype(float) - 1.0
    raise ValueError(f"unknown noise kind {kind!r}; use one of {NOISE_KINDS}")


def sample(
    model: SpikedModel,
    n: int,
    dist: str = "gaussian",
    seed: int | None = None,
) -> SampleSet:
    """Draw ``n`` independent observations from the model.

    Factor loadings and noise entries are both drawn i.i.d. from ``dist``.
    The returned set retains them for diagnostics.
    """
    if n < 1:
        raise ValueError("need at least one observation")
    rng = stream(0 if seed is None else seed, "data")
    theta = _draws(rng, dist, (n, model.r))
    noise = _draws(rng, dist, (n,) + model.dims)
    basis = np.stack([c.dense() for c in model.components])  # (r, d1..dp)
    signal = np.tensordot(theta * np.asarray(model.sigma), basis, axes=(1, 0))
    observations = signal + model.sigma0 * noise
    return SampleSet(observations, factors=theta, noise=noise)


def model_to_config(
    model: SpikedModel,
    *,
    components_mode: str,
    seed: int | None,
    noise: str = "gaussian",
) -> dict:
    """Generator configuration as a plain JSON-ready dict."""
    return {
        "dims": list(model.dims),
        "r": model.r,
        "sigma": list(model.sigma),
        "sigma0": model.sigma0,
        "components_mode": components_mode,
        "seed": seed,
        "noise": noise,
    }


def model_from_config(cfg: dict) -> SpikedModel:
    """Rebuild a model from :func:`model_to_config` output."""
    sigma = cfg["sigma"]
    if "r" in cfg and int(cfg["r"]) != len(sigma):
        raise ValueError("config r does not match the number of sigma entries")
    return make_model(
        tuple(cfg["dims"]),
        sigma,
        float(cfg["sigma0"]),
        components_mode=cfg.get("components_mode", "random"),
        seed=cfg.get("seed"),
    )
