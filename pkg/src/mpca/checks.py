"""Small-instance validation battery behind ``mpca oracle-check``.

Cross-checks the production estimation path against the brute-force
references on seeded instances. Each check is cheap; the full statistical
acceptance study lives in the test suite.
"""

from __future__ import annotations

import numpy as np

from . import oracle
from .covariance import CovarianceView, bilinear, contracted_matrix
from .estimator import AlsConfig, rank_one_als
from .model import make_model, sample
from .tensors import sin_angle

__all__ = ["oracle_check"]


def _check_dense_eig_residual() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    a = rng.standard_normal((5, 5))
    c = a.T @ a
    vals, vecs = oracle.dense_eig(c)
    resid = float(np.max(np.abs(c @ vecs - vecs * vals)))
    return resid <= 1e-8 * max(1.0, vals[0]), f"residual={resid:.2e}"


def _vector_instance():
    model = make_model((30,), [2.0], 1.0, components_mode="random", seed=11)
    return model, sample(model, 200, "gaussian", seed=11)


def _check_vector_equivalence() -> tuple[bool, str]:
    _, data = _vector_instance()
    res = rank_one_als(CovarianceView(data.observations), AlsConfig(seed=11))
    _, vecs = oracle.dense_eig(oracle.dense_covariance(data.observations))
    s = sin_angle(res.factors[0], vecs[:, 0])
    return s <= 1e-8, f"sin_angle={s:.2e}"


def _matrix_instance(seed: int = 5):
    model = make_model((2, 2), [2.0], 1.0, components_mode="random", seed=seed)
    return model, sample(model, 200, "gaussian", seed=seed)


def _check_grid_agreement() -> tuple[bool, str]:
    _, data = _matrix_instance()
    res = rank_one_als(CovarianceView(data.observations), AlsConfig(seed=5))
    _, grid_obj = oracle.grid_best_rank_one(data.observations, step=0.001)
    gap = abs(res.value - grid_obj)
    return gap <= 1e-4, f"objective gap={gap:.2e}"


def _check_stationarity(_corrupt: bool = False) -> tuple[bool, str]:
    model = make_model((6, 5), [2.0], 1.0, components_mode="random", seed=3)
    data = sample(model, 150, "gaussian", seed=3)
    view = CovarianceView(data.observations)
    res = rank_one_als(view, AlsConfig(seed=3))
    factors = [f.copy() for f in res.factors]
    if _corrupt:
        # test hook: a perturbed update must trip this check
        factors[0] = factors[0] + 0.02
        factors[0] /= np.linalg.norm(factors[0])
    worst = 0.0
    for q in range(len(factors)):
        m = contracted_matrix(view, factors, q)
        w = factors[q]
        lam = float(w @ (m @ w))
        worst = max(worst, float(np.linalg.norm(m @ w - lam * w)))
    return worst <= 1e-8, f"stationarity residual={worst:.2e}"


def _check_rank_one_bound() -> tuple[bool, str]:
    _, data = _matrix_instance(seed=9)
    res = rank_one_als(CovarianceView(data.observations), AlsConfig(seed=9))
    vals, _ = oracle.dense_eig(oracle.dense_covariance(data.observations))
    # the rank-one constrained maximum cannot beat the unconstrained one
    ok = res.value <= vals[0] + 1e-10
    return ok, f"objective={res.value:.6f}, top eigenvalue={vals[0]:.6f}"


def oracle_check(*, _corrupt_als: bool = False) -> tuple[bool, list[tuple[str, bool, str]]]:
    """Run the battery; returns (all_ok, [(name, ok, detail), ...])."""
    rows = [
        ("dense-eig-residual", *_check_dense_eig_residual()),
        ("vector-data-equivalence", *_check_vector_equivalence()),
        ("grid-search-agreement", *_check_grid_agreement()),
        ("als-stationarity", *_check_stationarity(_corrupt_als)),
        ("rank-one-upper-bound", *_check_rank_one_bound()),
    ]
    return all(ok for _, ok, _ in rows), rows
