"""Confidence intervals and tests for linear forms of the components.

The studentized statistic for ``<u_k_q, v>`` uses the plug-in standard
error ``sqrt(s0/sk + (s0/sk)^2) * ||Pv|| / sqrt(n)`` where ``s0`` and
``sk`` are the estimated noise and spike variances and ``P`` projects onto
the orthocomplement of the regime's own estimated direction. Three regimes:

* ``A``: the one-step updated direction, no shrinkage correction
  (dimension small relative to sqrt(n));
* ``B``: the cross-fitted direction scaled by the explicit factor ``1+b``
  (dimension up to about n^(2/3));
* ``C``: the cross-fitted direction scaled by the empirical factor
  ``1+b_hat`` from the double split (dimension up to about n).

``regime="auto"`` picks A when ``max_q d_q < sqrt(n)``, B when it is below
``n^(2/3)`` and C otherwise; the thresholds are heuristics for asymptotic
statements and are applied with no constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .debias import EstimateBundle, InferenceUnavailableError, explicit_bias

__all__ = [
    "LinearFormTarget",
    "InferenceResult",
    "normal_quantile",
    "resolve_regime",
    "infer_linear_form",
    "theoretical_density",
]

REGIMES = ("A", "B", "C")


def normal_quantile(alpha_over_2: float) -> float:
    """Upper tail quantile of the standard normal, for tail mass in (0, 0.5]."""
    if not 0.0 < alpha_over_2 <= 0.5:
        raise ValueError("tail mass must lie in (0, 0.5]")
    return float(ndtri(1.0 - alpha_over_2))


@dataclass(frozen=True)
class LinearFormTarget:
    """A probe <u_k^(q), v>: component k, mode q (0-based), vector v."""

    k: int
    q: int
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 1 or np.linalg.norm(v) == 0.0:
            raise ValueError("probe vector must be 1-D and nonzero")
        object.__setattr__(self, "v", v)


@dataclass
class InferenceResult:
    point: float
    se: float
    lo: float
    hi: float
    z_stat: float
    reject: bool
    regime: str
    alpha: float
    degenerate: bool = False

    def to_row(self) -> dict:
        return {
            "point": self.point,
            "se": self.se,
            "lo": self.lo,
            "hi": self.hi,
            "z": self.z_stat,
            "reject": self.reject,
            "regime": self.regime,
        }


def resolve_regime(regime: str, dims, n: int) -> str:
    if regime in REGIMES:
        return regime
    if regime != "auto":
        raise ValueError(f"unknown regime {regime!r}; use auto, A, B or C")
    d = max(dims)
    if d < math.sqrt(n):
        return "A"
    if d < n ** (2.0 / 3.0):
        return "B"
    return "C"


def _direction_and_bias(bundle: EstimateBundle, k: int, q: int, regime: str):
    if regime == "A":
        return bundle.one_step[k][q], 0.0, bundle.n_total
    if bundle.cross_fit is None:
        raise InferenceUnavailableError(
            f"regime {regime} needs the split estimates; rebuild with split=True"
        )
    direction = bundle.cross_fit[k][q]
    if regime == "B":
        if bundle.variances.clipped[k]:
            raise InferenceUnavailableError(
                f"spike variance for component {k + 1} was clipped to zero"
            )
        b = explicit_bias(
            bundle.dims[q],
            bundle.n_used,
            bundle.variances.sigma0_sq,
            float(bundle.variances.sigma_sq[k]),
        )
        return direction, b, bundle.n_used
    if bundle.bias_empirical is None:
        raise InferenceUnavailableError(
            "regime C needs the quarter estimates; rebuild with quarters=True"
        )
    b = float(bundle.bias_empirical[k, q])
    if not np.isfinite(b):
        raise InferenceUnavailableError(
            f"empirical correction unavailable for component {k + 1}, mode {q + 1}"
        )
    return direction, b, bundle.n_used


def infer_linear_form(
    bundle: EstimateBundle,
    target: LinearFormTarget,
    alpha: float = 0.05,
    regime: str = "auto",
) -> InferenceResult:
    """Point estimate, CI and two-sided test of H0: <u_k^(q), v> = 0.

    The rejection rule compares ``|point|`` against ``z * se`` directly, so
    the decision is invariant to positive rescaling of ``v``. When ``v``
    lies along the estimated direction the standard error vanishes; the
    result then carries a width-0 interval and a ``degenerate`` flag
    instead of failing, since that is the correct limit.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    r = bundle.r
    p = bundle.order
    if not 0 <= target.k < r:
        raise ValueError(f"component index {target.k} out of range")
    if not 0 <= target.q < p:
        raise ValueError(f"mode index {target.q} out of range")
    if target.v.shape != (bundle.dims[target.q],):
        raise ValueError("probe vector length does not match the mode dimension")
    regime = resolve_regime(regime, bundle.dims, bundle.n_total)
    if bundle.variances.clipped[target.k] or bundle.variances.sigma_sq[target.k] <= 0:
        raise InferenceUnavailableError(
            f"spike variance for component {target.k + 1} was clipped to zero"
        )
    direction, bias, n_eff = _direction_and_bias(bundle, target.k, target.q, regime)
    raw = float(direction @ target.v)
    point = (1.0 + bias) * raw
    ratio = bundle.variances.sigma0_sq / float(bundle.variances.sigma_sq[target.k])
    perp = target.v - float(direction @ target.v) * direction
    perp_norm = float(np.linalg.norm(perp))
    # probes (numerically) parallel to the estimated direction have no
    # orthogonal component; the width-0 interval is the correct limit
    if perp_norm <= 1e-12 * float(np.linalg.norm(target.v)):
        perp_norm = 0.0
    se = math.sqrt(ratio + ratio * ratio) * perp_norm / math.sqrt(n_eff)
    z_alpha = normal_quantile(alpha / 2.0)
    if se == 0.0:
        return InferenceResult(
            point=point,
            se=0.0,
            lo=point,
            hi=point,
            z_stat=float("nan"),
            reject=abs(point) > 0.0,
            regime=regime,
            alpha=alpha,
            degenerate=True,
        )
    return InferenceResult(
        point=point,
        se=se,
        lo=point - z_alpha * se,
        hi=point + z_alpha * se,
        z_stat=point / se,
        reject=abs(point) >= z_alpha * se,
        regime=regime,
        alpha=alpha,
    )


def theoretical_density(
    sigma0: float, sigma_k: float, u_true_q, v, n: int
) -> tuple[float, float]:
    """Mean and sd of the limiting normal for the linear form estimate.

    Used to overlay the asymptotic density on Monte-Carlo histograms; the
    inputs are the ground-truth quantities, not plug-ins.
    """
    if sigma_k <= 0:
        raise ValueError("spike scale must be positive")
    u = np.asarray(u_true_q, dtype=float)
    v = np.asarray(v, dtype=float)
    mean = float(u @ v)
    ratio = (sigma0 / sigma_k) ** 2
    perp = v - float(u @ v) * u
    sd = math.sqrt((ratio + ratio * ratio) / n) * float(np.linalg.norm(perp))
    return mean, sd
