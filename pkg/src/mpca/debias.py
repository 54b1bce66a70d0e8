"""Bias correction for sample multiway PCs.

Three regimes, ordered by how aggressive the dimension is allowed to be
relative to the sample size:

* one-step update: re-solve each mode's eigenproblem with the other modes
  frozen at the fitted component and no orthogonality deflation, removing
  the ordering bias that repeated eigenvalues can induce;
* split + cross-fit: fit on two halves, compute each half's mode-q
  eigenvector with the other half's directions frozen, and average the two
  (after sign alignment) into a single unit vector; an explicit
  multiplicative factor ``1 + b`` with
  ``b = sqrt(1 + (d_q/n) * (s0/sk + (s0/sk)^2)) - 1`` then restores the
  unit inner product with the target direction;
* double split: the halves are further split into quarters whose mutual
  inner products estimate the shrinkage empirically, giving a data-driven
  factor ``1 + b_hat`` that needs no variance plug-ins.

All split bookkeeping (shuffle order, relabeling of half components
against the full-data fit, sign conventions) is retained on the returned
bundle so runs are reproducible and exportable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceView, VarianceEstimates, contracted_matrix
from .estimator import AlsConfig, fit_mpca_results, leading_eigenvector
from .model import RankOnePC, SampleSet
from .seeding import stream

__all__ = [
    "InferenceUnavailableError",
    "EstimateBundle",
    "one_step_update",
    "split_fit",
    "cross_fit_directions",
    "explicit_bias",
    "empirical_bias",
    "build_bundle",
]


class InferenceUnavailableError(RuntimeError):
    """Raised when a requested correction or interval cannot be formed.

    Typical causes: a clipped (zero) spike variance estimate, or a
    nonpositive quarter inner product signaling that the asymptotic regime
    is violated at this sample size.
    """


def _observations(data) -> np.ndarray:
    obs = getattr(data, "observations", data)
    return np.asarray(obs, dtype=float)


def one_step_update(data, component: RankOnePC) -> list[np.ndarray]:
    """Refresh every mode of one fitted component without deflation.

    For each mode q the returned vector is the leading eigenvector of the
    sample covariance contracted against the component's other-mode
    vectors, sign-aligned with the input mode vector.
    """
    view = CovarianceView(_observations(data))
    refreshed = []
    for q in range(view.order):
        m = contracted_matrix(view, component.factors, q)
        if np.max(np.abs(m)) == 0.0:
            raise ValueError(f"mode-{q} contracted matrix is numerically zero")
        _, w = leading_eigenvector(m, start=component.factors[q])
        if float(w @ component.factors[q]) < 0:
            w = -w
        refreshed.append(w)
    return refreshed


def _tensor_overlap(a: RankOnePC, b: RankOnePC) -> float:
    prod = 1.0
    for fa, fb in zip(a.factors, b.factors):
        prod *= float(fa @ fb)
    return prod


def _relabel_against(reference, candidates):
    """Greedy relabeling by minimal rank-one tensor angle.

    Slot k takes the unused candidate whose tensor makes the smallest
    angle with reference k. Returns (ordered candidates, permutation).
    """
    r = len(reference)
    used: set[int] = set()
    order: list[int] = []
    for k in range(r):
        best_l, best_sin = -1, np.inf
        for l in range(r):
            if l in used:
                continue
            prod = _tensor_overlap(reference[k], candidates[l])
            s = math.sqrt(max(0.0, 1.0 - min(prod * prod, 1.0)))
            if s < best_sin:
                best_l, best_sin = l, s
        used.add(best_l)
        order.append(best_l)
    return [candidates[l] for l in order], tuple(order)


def _sign_align(component: RankOnePC, reference: RankOnePC) -> RankOnePC:
    factors = []
    for f, ref in zip(component.factors, reference.factors):
        factors.append(-f if float(f @ ref) < 0 else f)
    return RankOnePC(tuple(factors), value=component.value)


def split_fit(data, r: int, cfg: AlsConfig | None = None, *, full=None, block: int = 2):
    """Fit on the whole sample and on a seeded random split of it.

    Returns ``(full_components, half_components, shuffle, n_used, relabels)``
    where each half's components are relabeled (greedy minimal tensor angle
    against the full-data components) and sign-aligned mode-wise to them.
    After shuffling, the sample is truncated to a multiple of ``block``
    (2 for plain halves, 4 when quarter splits will follow); ``n_used``
    reports the effective size. A provided ``full`` fit is reused.
    """
    obs = _observations(data)
    n = obs.shape[0]
    if n < 2 * block:
        raise ValueError(f"sample splitting needs at least {2 * block} observations")
    cfg = cfg or AlsConfig()
    if full is None:
        full = [res.component for res in fit_mpca_results(obs, r, cfg)]
    shuffle = stream(cfg.seed, "split").permutation(n)
    n_used = n - (n % block)
    order = shuffle[:n_used]
    halves_idx = (order[: n_used // 2], order[n_used // 2 :])
    half_components = []
    relabels = []
    for h, idx in enumerate(halves_idx):
        cfg_h = AlsConfig(
            max_iters=cfg.max_iters,
            rel_tol=cfg.rel_tol,
            n_restarts=cfg.n_restarts,
            init_mode=cfg.init_mode,
            seed=cfg.seed + 7_000_019 * (h + 1),
        )
        comps = [res.component for res in fit_mpca_results(obs[idx], r, cfg_h)]
        comps, perm = _relabel_against(full, comps)
        comps = [_sign_align(c, ref) for c, ref in zip(comps, full)]
        half_components.append(comps)
        relabels.append(perm)
    return full, half_components, shuffle, n_used, relabels


def cross_fit_directions(half_views, half_components, full_components):
    """Cross-fitted directions: each half's eigenvector under the other
    half's frozen directions, sign-aligned and averaged to a unit vector.

    Returns ``(unit, halves, sum_norms)`` indexed ``[k][q]`` (and
    ``[k][q][h]`` for the halves). The pair is oriented so that the first
    vector has nonnegative inner product with the full-data direction and
    the second with the first; the average of an aligned pair never
    vanishes, so the normalization is safe.
    """
    r = len(full_components)
    p = len(full_components[0].factors) if r else 0
    unit = [[None] * p for _ in range(r)]
    halves = [[[None, None] for _ in range(p)] for _ in range(r)]
    sum_norms = np.zeros((r, p))
    for k in range(r):
        for q in range(p):
            pair = []
            for h in (0, 1):
                other = half_components[1 - h][k]
                m = contracted_matrix(half_views[h], other.factors, q)
                if np.max(np.abs(m)) == 0.0:
                    raise ValueError(
                        f"half-{h + 1} contracted matrix for component {k + 1}, "
                        f"mode {q + 1} is numerically zero"
                    )
                _, w = leading_eigenvector(m, start=full_components[k].factors[q])
                pair.append(w)
            if float(pair[0] @ full_components[k].factors[q]) < 0:
                pair[0] = -pair[0]
            if float(pair[0] @ pair[1]) < 0:
                pair[1] = -pair[1]
            total = pair[0] + pair[1]
            norm = float(np.linalg.norm(total))
            sum_norms[k, q] = norm
            unit[k][q] = total / norm
            halves[k][q] = pair
    return unit, halves, sum_norms


def explicit_bias(d_q: int, n: int, sigma0_sq: float, sigma_k_sq: float) -> float:
    """Closed-form shrinkage factor b for the cross-fitted direction."""
    if sigma_k_sq <= 0:
        raise InferenceUnavailableError(
            "explicit bias needs a positive spike variance estimate"
        )
    ratio = sigma0_sq / sigma_k_sq
    return math.sqrt(1.0 + (d_q / n) * (ratio + ratio * ratio)) - 1.0


def bias_from_quarters(sum_norm: float, overlap_1: float, overlap_2: float) -> float:
    """Empirical shrinkage factor from the quarter inner products."""
    if overlap_1 <= 0 or overlap_2 <= 0:
        raise InferenceUnavailableError(
            f"nonpositive quarter inner product ({overlap_1:.3g}, {overlap_2:.3g}); "
            "the sample is too small for the empirical correction"
        )
    return sum_norm / (math.sqrt(overlap_1) + math.sqrt(overlap_2)) - 1.0


def _quarter_vectors(obs, shuffle, n_used, half_components, full_components):
    """Per-quarter refreshed directions and their within-half overlaps.

    Each half is split into two equal groups; the mode-q vector of each
    group's contracted covariance is computed with the OTHER half's
    directions frozen and sign-aligned against the owning half's component.
    Requires ``n_used`` divisible by 4.
    """
    r = len(full_components)
    p = len(full_components[0].factors)
    m = n_used // 2
    quarter_idx = [
        (shuffle[: m // 2], shuffle[m // 2 : m]),
        (shuffle[m : m + m // 2], shuffle[m + m // 2 : n_used]),
    ]
    overlaps = np.full((r, p, 2), np.nan)
    vectors = [[[[None, None], [None, None]] for _ in range(p)] for _ in range(r)]
    views = [
        [CovarianceView(obs[idx]) for idx in quarter_idx[h]] for h in (0, 1)
    ]
    for k in range(r):
        for q in range(p):
            for h in (0, 1):
                other = half_components[1 - h][k]
                own = half_components[h][k].factors[q]
                pair = []
                for j in (0, 1):
                    mq = contracted_matrix(views[h][j], other.factors, q)
                    if np.max(np.abs(mq)) == 0.0:
                        raise ValueError(
                            f"quarter [{h + 1}][{j + 1}] contracted matrix is zero"
                        )
                    _, w = leading_eigenvector(mq, start=own)
                    if float(w @ own) < 0:
                        w = -w
                    pair.append(w)
                    vectors[k][q][h][j] = w
                overlaps[k, q, h] = float(pair[0] @ pair[1])
    return vectors, overlaps


@dataclass
class EstimateBundle:
    """Everything the estimators and corrections produced for one sample.

    Vector collections are indexed ``[k][q]`` (component, mode). Entries of
    ``bias_empirical`` are NaN where a quarter inner product was
    nonpositive; requesting the empirical regime there raises
    :class:`InferenceUnavailableError`.
    """

    dims: tuple[int, ...]
    n_total: int
    n_used: int
    components: list[RankOnePC]
    converged: list[bool]
    one_step: list[list[np.ndarray]]
    variances: VarianceEstimates
    shuffle: np.ndarray | None = None
    half_components: list[list[RankOnePC]] | None = None
    half_relabels: list[tuple[int, ...]] | None = None
    cross_fit: list[list[np.ndarray]] | None = None
    cross_fit_halves: list[list[list[np.ndarray]]] | None = None
    cross_fit_sum_norms: np.ndarray | None = None
    quarter_overlaps: np.ndarray | None = None
    bias_explicit: np.ndarray | None = None
    bias_empirical: np.ndarray | None = None
    notes: list[str] = None

    def __post_init__(self):
        if self.notes is None:
            self.notes = []

    @property
    def r(self) -> int:
        return len(self.components)

    @property
    def order(self) -> int:
        return len(self.dims)

    def has_split(self) -> bool:
        return self.cross_fit is not None

    def has_quarters(self) -> bool:
        return self.bias_empirical is not None

    def to_dict(self) -> dict:
        def vecgrid(grid):
            if grid is None:
                return None
            return [[np.asarray(v).tolist() for v in row] for row in grid]

        return {
            "dims": list(self.dims),
            "n_total": self.n_total,
            "n_used": self.n_used,
            "components": [c.to_dict() for c in self.components],
            "converged": list(self.converged),
            "one_step": vecgrid(self.one_step),
            "variances": self.variances.to_dict(),
            "shuffle": None if self.shuffle is None else self.shuffle.tolist(),
            "half_components": None
            if self.half_components is None
            else [[c.to_dict() for c in half] for half in self.half_components],
            "half_relabels": None
            if self.half_relabels is None
            else [list(p) for p in self.half_relabels],
            "cross_fit": vecgrid(self.cross_fit),
            "cross_fit_halves": None
            if self.cross_fit_halves is None
            else [
                [[np.asarray(v).tolist() for v in pair] for pair in row]
                for row in self.cross_fit_halves
            ],
            "cross_fit_sum_norms": None
            if self.cross_fit_sum_norms is None
            else self.cross_fit_sum_norms.tolist(),
            "quarter_overlaps": None
            if self.quarter_overlaps is None
            else self.quarter_overlaps.tolist(),
            "bias_explicit": None
            if self.bias_explicit is None
            else self.bias_explicit.tolist(),
            "bias_empirical": None
            if self.bias_empirical is None
            else self.bias_empirical.tolist(),
            "notes": list(self.notes),
        }


def empirical_bias(data, r: int, cfg: AlsConfig | None = None) -> np.ndarray:
    """Empirical shrinkage factors for all (component, mode) pairs.

    Convenience wrapper over :func:`build_bundle`; entries are NaN where
    the correction is unavailable.
    """
    bundle = build_bundle(data, r, cfg, split=True, quarters=True)
    if bundle.bias_empirical is None:
        raise ValueError("sample too small for the double-split correction")
    return bundle.bias_empirical


def build_bundle(
    data,
    r: int,
    cfg: AlsConfig | None = None,
    *,
    split: bool = True,
    quarters: bool = True,
) -> EstimateBundle:
    """Run the full estimation pipeline on one sample.

    Always fits the components, refreshes them with the one-step update and
    estimates the variances. With ``split=True`` also computes the
    cross-fitted directions (and, with ``quarters=True`` and n divisible
    by 4 after truncation, the empirical shrinkage factors).
    """
    obs = _observations(data)
    if isinstance(data, SampleSet):
        obs = data.observations
    n = obs.shape[0]
    dims = obs.shape[1:]
    cfg = cfg or AlsConfig()
    results = fit_mpca_results(obs, r, cfg)
    components = [res.component for res in results]
    converged = [res.converged for res in results]
    one_step = [one_step_update(obs, c) for c in components]
    variances = VarianceEstimates.estimate(obs, components)
    notes: list[str] = []
    for k, clipped in enumerate(variances.clipped):
        if clipped:
            notes.append(f"spike variance for component {k + 1} clipped to 0")
    bundle = EstimateBundle(
        dims=dims,
        n_total=n,
        n_used=n,
        components=components,
        converged=converged,
        one_step=one_step,
        variances=variances,
        notes=notes,
    )
    if not split:
        return bundle
    if n < 4:
        bundle.notes.append("sample too small to split; cross-fit skipped")
        return bundle

    want_quarters = quarters and n >= 8
    _, half_components, shuffle, n_used, relabels = split_fit(
        obs, r, cfg, full=components, block=4 if want_quarters else 2
    )
    if n_used != n:
        bundle.notes.append(f"truncated to {n_used} of {n} observations for splitting")
    order = shuffle[:n_used]
    halves_idx = (order[: n_used // 2], order[n_used // 2 :])
    half_views = [CovarianceView(obs[idx]) for idx in halves_idx]
    unit, halves, sum_norms = cross_fit_directions(
        half_views, half_components, components
    )
    bundle.shuffle = shuffle
    bundle.n_used = n_used
    bundle.half_components = half_components
    bundle.half_relabels = relabels
    bundle.cross_fit = unit
    bundle.cross_fit_halves = halves
    bundle.cross_fit_sum_norms = sum_norms

    p = len(dims)
    bias_explicit = np.full((r, p), np.nan)
    for k in range(r):
        if variances.clipped[k]:
            continue
        for q in range(p):
            bias_explicit[k, q] = explicit_bias(
                dims[q], n_used, variances.sigma0_sq, float(variances.sigma_sq[k])
            )
    bundle.bias_explicit = bias_explicit

    if want_quarters:
        _, overlaps = _quarter_vectors(obs, shuffle, n_used, half_components, components)
        bias_empirical = np.full((r, p), np.nan)
        for k in range(r):
            for q in range(p):
                try:
                    bias_empirical[k, q] = bias_from_quarters(
                        float(sum_norms[k, q]),
                        float(overlaps[k, q, 0]),
                        float(overlaps[k, q, 1]),
                    )
                except InferenceUnavailableError as exc:
                    bundle.notes.append(
                        f"component {k + 1} mode {q + 1}: {exc}"
                    )
        bundle.quarter_overlaps = overlaps
        bundle.bias_empirical = bias_empirical
    elif quarters:
        bundle.notes.append("sample too small for quarters; empirical bias skipped")
    return bundle
