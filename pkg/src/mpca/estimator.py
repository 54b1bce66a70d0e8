"""Sample multiway PC extraction.

Each component maximizes the sample variance of a rank-one projection;
the maximizer is found by alternating mode updates (each mode update sets
the mode-q vector to the leading eigenvector of the covariance contracted
along all other modes), with random restarts to escape local maxima.
Successive components are extracted under per-mode orthocomplement
deflation, which enforces complete orthogonality of the output exactly.

The objective is non-decreasing across sweeps by construction; a sweep
whose objective drops beyond rounding slack indicates a numerical bug and
raises. Convergence requires the factor movement within a sweep to fall
below an internal tolerance; restarts first converge loosely (objective
change below ``rel_tol`` on consecutive sweeps, or movement below the loose
gate), then only the winning restart is polished to full precision. The
objective-change rule alone cannot certify small angular error: near an
optimum the objective gap is quadratic in the angle, so a 1e-10 objective
change still allows ~1e-5 of angle movement.

Leading eigenvectors on the production path come from plain power
iteration on the (PSD) contracted matrices; the dense-eigensolver route
lives in :mod:`mpca.oracle` and is used only for validation, so the two
paths stay independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceView, bilinear, contracted_matrix, perp_projector
from .model import RankOnePC, SpikedModel
from .seeding import substream

__all__ = [
    "AlsConfig",
    "AlsResult",
    "MatchResult",
    "leading_eigenvector",
    "rank_one_als",
    "fit_mpca",
    "fit_mpca_results",
    "match_permutation",
]

POWER_TOL = 1e-12
POWER_MAX_ITERS = 10000
MOVE_TOL = 1e-10
# restarts only need enough accuracy to rank local maxima (objective gaps
# between distinct maxima are many orders larger); the winner is then
# polished at the full tolerances
RANK_MOVE_TOL = 1e-3
RANK_REL_TOL = 1e-6
LOOSE_EIG_TOL = 1e-7
LOOSE_EIG_MAX_ITERS = 150
MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class AlsConfig:
    """Solver configuration.

    ``init_mode`` is ``"contracted-eig"`` (first restart warm-started from
    contracted eigenvectors against random companions, remaining restarts
    fully random) or ``"random"`` (all restarts random). ``seed`` feeds the
    restart initializations only.
    """

    max_iters: int = 500
    rel_tol: float = 1e-10
    n_restarts: int = 8
    init_mode: str = "contracted-eig"
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        if self.init_mode not in ("contracted-eig", "random"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")

    @classmethod
    def from_dict(cls, cfg: dict) -> "AlsConfig":
        allowed = {"max_iters", "rel_tol", "n_restarts", "init_mode", "seed"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ValueError(f"unknown solver options: {sorted(unknown)}")
        return cls(**cfg)


@dataclass
class AlsResult:
    """One extracted component plus solver diagnostics."""

    factors: tuple[np.ndarray, ...]
    value: float
    converged: bool
    n_sweeps: int
    restart: int
    objective_trace: list[float] = field(default_factory=list)

    @property
    def component(self) -> RankOnePC:
        return RankOnePC(self.factors, value=max(self.value, 0.0))


def _fix_sign(v: np.ndarray) -> np.ndarray:
    lead = int(np.argmax(np.abs(v)))
    return -v if v[lead] < 0 else v


def leading_eigenvector(
    m: np.ndarray,
    start: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    tol: float = POWER_TOL,
    max_iters: int = POWER_MAX_ITERS,
) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a symmetric PSD matrix by power iteration.

    Stops when the residual ``||M v - lambda v||`` falls below
    ``tol * max(lambda, 1)``. The returned vector has its largest-magnitude
    entry positive, making the output deterministic given the start.
    Raises on a (numerically) zero matrix, which has no leading direction.
    """
    m = np.asarray(m, dtype=float)
    d = m.shape[0]
    if float(np.max(np.abs(m))) == 0.0:
        raise ValueError("zero matrix has no leading direction")
    if start is not None and float(start @ start) > 0:
        x = np.asarray(start, dtype=float)
        x = x / np.sqrt(float(x @ x))
    elif rng is not None:
        x = rng.standard_normal(d)
        x /= np.sqrt(float(x @ x))
    else:
        x = np.full(d, 1.0 / np.sqrt(d))
    retries = 0
    lam = 0.0
    for _ in range(max_iters):
        y = m @ x
        ny_sq = float(y @ y)
        if ny_sq == 0.0:
            # iterate fell into the nullspace; restart from a fresh direction
            retries += 1
            if retries > d:
                raise ValueError("matrix is numerically zero on every probe")
            if rng is not None:
                x = rng.standard_normal(d)
            else:
                x = np.zeros(d)
                x[(retries - 1) % d] = 1.0
            x /= np.sqrt(float(x @ x))
            continue
        lam = float(x @ y)
        resid_sq = float((y - lam * x) @ (y - lam * x))
        if resid_sq <= (tol * max(abs(lam), 1.0)) ** 2:
            break
        x = y / np.sqrt(ny_sq)
    else:
        lam = float(x @ (m @ x))
    return lam, _fix_sign(x)


def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _initial_factors(view: CovarianceView, cfg: AlsConfig, restart: int, rng) -> list[np.ndarray]:
    dims = view.dims
    factors = [_random_unit(rng, d) for d in dims]
    if cfg.init_mode == "contracted-eig" and restart == 0:
        warm = []
        for q in range(len(dims)):
            m = contracted_matrix(view, factors, q)
            if np.max(np.abs(m)) == 0.0:
                warm.append(factors[q])
                continue
            _, w = leading_eigenvector(m, start=None, rng=rng)
            warm.append(w)
        factors = warm
    return factors


def _als_sweeps(view, cfg, factors, rng, move_tol, start_trace=None):
    """Alternate mode updates until the movement gate closes.

    Returns (factors, value, converged, sweeps, trace). Objective
    monotonicity is checked every sweep. The loose phase (restart ranking)
    solves the mode eigenproblems at reduced accuracy; truncated power
    iteration cannot break monotonicity because the Rayleigh quotient is
    non-decreasing along power iterations on a PSD matrix.
    """
    p = len(factors)
    loose = move_tol > MOVE_TOL
    eig_tol = LOOSE_EIG_TOL if loose else POWER_TOL
    eig_iters = LOOSE_EIG_MAX_ITERS if loose else POWER_MAX_ITERS
    rel_tol = max(cfg.rel_tol, RANK_REL_TOL) if loose else cfg.rel_tol
    trace = list(start_trace) if start_trace else []
    prev_obj = trace[-1] if trace else None
    small_changes = 0
    converged = False
    value = prev_obj if prev_obj is not None else float("nan")
    sweeps = 0
    for sweeps in range(1, cfg.max_iters + 1):
        movement = 0.0
        for q in range(p):
            m = contracted_matrix(view, factors, q)
            value, w = leading_eigenvector(
                m, start=factors[q], rng=rng, tol=eig_tol, max_iters=eig_iters
            )
            delta = w - factors[q]
            movement = max(movement, float(np.sqrt(delta @ delta)))
            factors[q] = w
        trace.append(value)
        if prev_obj is not None:
            if value < prev_obj - MONOTONE_SLACK * max(1.0, abs(prev_obj)):
                raise RuntimeError(
                    f"objective decreased from {prev_obj!r} to {value!r}; numerical bug"
                )
            if abs(value - prev_obj) <= rel_tol * max(abs(value), 1e-300):
                small_changes += 1
            else:
                small_changes = 0
        prev_obj = value
        if movement <= move_tol or (loose and small_changes >= 2):
            converged = True
            break
    return factors, value, converged, sweeps, trace


def rank_one_als(
    view: CovarianceView, cfg: AlsConfig, extra_starts=()
) -> AlsResult:
    """Best rank-one direction of the (possibly deflated) sample covariance.

    Runs ``cfg.n_restarts`` independently initialized solves plus one solve
    per entry of ``extra_starts`` (caller-provided warm starts, e.g.
    directions discovered later in a deflation sequence), keeps the one
    with the highest objective (ties broken by lowest restart index), and
    polishes it to full precision. Deterministic given ``cfg.seed``.

    Raises
    ------
    ValueError
        If the data carry no direction of positive variance (all-zero or
        fully deflated input).
    """
    best = None
    n_extra = len(extra_starts)
    for restart in range(cfg.n_restarts + n_extra):
        rng = substream(cfg.seed, "als", restart)
        if restart < cfg.n_restarts:
            factors = _initial_factors(view, cfg, restart, rng)
        else:
            factors = [np.array(f, dtype=float) for f in extra_starts[restart - cfg.n_restarts]]
        try:
            factors, value, conv, sweeps, trace = _als_sweeps(
                view, cfg, factors, rng, RANK_MOVE_TOL
            )
        except ValueError as exc:
            raise ValueError(f"no direction of positive variance: {exc}") from exc
        if best is None or value > best[0]:
            best = (value, restart, factors, conv, sweeps, trace, rng)
    value, restart, factors, _, sweeps, trace, rng = best
    factors, value, converged, extra, trace = _als_sweeps(
        view, cfg, factors, rng, MOVE_TOL, start_trace=trace
    )
    return AlsResult(
        factors=tuple(factors),
        value=value,
        converged=converged,
        n_sweeps=sweeps + extra,
        restart=restart,
        objective_trace=trace,
    )


def fit_mpca_results(data, r: int, cfg: AlsConfig | None = None) -> list[AlsResult]:
    """Extract r components with successive orthocomplement deflation.

    The maximized objective must be non-increasing along the deflation
    sequence: component k+1, being feasible for problem k, can never score
    above component k under k's own deflation. Random restarts can miss the
    better basin (with equal spikes the basin entered is a sample-driven
    coin flip), so a violation triggers a rewind: component k is refit with
    the offending direction injected as a warm start, which restores
    monotonicity by construction. Each rewind strictly increases an earlier
    value, so the loop terminates; a generous cap guards against cycling on
    numerically tied values.
    """
    from .covariance import _as_observations  # shared input normalization

    obs = _as_observations(data)
    dims = obs.shape[1:]
    if r < 1:
        raise ValueError("need r >= 1")
    if r > min(dims):
        raise ValueError(f"cannot extract r={r} completely orthogonal components")
    cfg = cfg or AlsConfig()
    results: list[AlsResult] = []
    views: list[CovarianceView] = []
    extra_starts: dict[int, list] = {}
    rewinds = 0
    k = 0
    while k < r:
        if k == 0:
            view = CovarianceView(obs)
        else:
            found = [res.factors for res in results]
            projections = [
                perp_projector([f[q] for f in found], dims[q]) for q in range(len(dims))
            ]
            view = CovarianceView(obs, projections)
        cfg_k = AlsConfig(
            max_iters=cfg.max_iters,
            rel_tol=cfg.rel_tol,
            n_restarts=cfg.n_restarts,
            init_mode=cfg.init_mode,
            seed=cfg.seed + 1_000_003 * k,
        )
        res = rank_one_als(view, cfg_k, extra_starts=extra_starts.get(k, ()))
        if k > 0:
            cross = bilinear(views[k - 1], res.factors, res.factors)
            slack = 1e-10 * max(1.0, abs(results[k - 1].value))
            if results[k - 1].value < cross - slack:
                rewinds += 1
                if rewinds > 3 * r:
                    raise RuntimeError(
                        f"deflated objective not monotone after {rewinds} rewinds: "
                        f"component {k + 1} scores {cross!r} under the previous "
                        f"deflation, above {results[k - 1].value!r}"
                    )
                extra_starts.setdefault(k - 1, []).append(res.factors)
                results.pop()
                views.pop()
                k -= 1
                continue
        results.append(res)
        views.append(view)
        k += 1
    return results


def fit_mpca(data, r: int, cfg: AlsConfig | None = None) -> list[RankOnePC]:
    """Like :func:`fit_mpca_results` but returns bare components."""
    return [res.component for res in fit_mpca_results(data, r, cfg)]


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching of estimated components to ground truth.

    ``perm[k]`` is the truth index matched to estimate k; ``signs[k][q]``
    is the factor to apply to the estimate's mode-q vector so that its
    inner product with the matched truth vector is nonnegative. Flipping an
    even number of mode signs leaves the rank-one array unchanged.
    """

    perm: tuple[int, ...]
    signs: np.ndarray
    scores: tuple[float, ...]
    ties: tuple[bool, ...]


def match_permutation(estimates, truth: SpikedModel) -> MatchResult:
    """Match estimates to truth by the weighted product of mode overlaps.

    Estimate k is matched greedily (k = 1, 2, ...) to the unused truth
    index maximizing ``sigma_l**2 * |prod_q <u_l_q, est_k_q>|``. Exact score
    ties are broken by the lowest truth index and flagged.
    """
    comps = [e.component if isinstance(e, AlsResult) else e for e in estimates]
    r = len(comps)
    if r != truth.r:
        raise ValueError(f"{r} estimates vs {truth.r} truth components")
    p = truth.order
    perm: list[int] = []
    scores: list[float] = []
    ties: list[bool] = []
    signs = np.ones((r, p))
    used: set[int] = set()
    for k in range(r):
        best_l, best_score, tie = -1, -np.inf, False
        for l in range(r):
            if l in used:
                continue
            prod = 1.0
            for q in range(p):
                prod *= float(truth.components[l].factors[q] @ comps[k].factors[q])
            score = truth.sigma[l] ** 2 * abs(prod)
            if score > best_score:
                best_l, best_score, tie = l, score, False
            elif score == best_score:
                tie = True
        used.add(best_l)
        perm.append(best_l)
        scores.append(best_score)
        ties.append(tie)
        for q in range(p):
            dot = float(truth.components[best_l].factors[q] @ comps[k].factors[q])
            signs[k, q] = -1.0 if dot < 0 else 1.0
    return MatchResult(tuple(perm), signs, tuple(scores), tuple(ties))


def components_to_json(components) -> list[dict]:
    """Fitted components as JSON-ready records (1-based component ids)."""
    return [
        {"k": k + 1, "value": c.value, "factors": [f.tolist() for f in c.factors]}
        for k, c in enumerate(components)
    ]
