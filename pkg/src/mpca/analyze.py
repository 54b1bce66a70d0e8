"""End-to-end analysis of a user-supplied long-format count/indicator tensor.

Preprocessing, applied in this fixed order when enabled:

1. drop units (first-index slices) whose fraction of missing cells exceeds
   a threshold;
2. natural log on strictly positive cells (nonpositive cells are flagged
   and treated as missing);
3. per-series centering to mean 0 and scaling to mean absolute deviation 1
   (a "series" is indexed by ``series_axes``, statistics are taken over the
   remaining axes; all-constant series have no scale and are excluded);
4. remaining missing cells are set to 0.

The cleaned stack is then fit, debiased per the chosen regime, and each
loading coordinate gets a confidence interval. The per-component explained
variation share reported is the heuristic ``sk / (sum_l sl + s0 * D)``
with ``D`` the number of cells per observation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .debias import build_bundle
from .estimator import AlsConfig
from .inference import LinearFormTarget, infer_linear_form, resolve_regime

__all__ = ["PreprocessReport", "AnalysisResult", "preprocess", "run_analysis", "write_analysis"]


@dataclass
class PreprocessReport:
    dropped_units: list[int] = field(default_factory=list)
    log_skipped: int = 0
    constant_series: int = 0
    missing_filled: int = 0
    centered: bool = False

    def to_dict(self) -> dict:
        return {
            "dropped_units": list(self.dropped_units),
            "log_skipped": self.log_skipped,
            "constant_series": self.constant_series,
            "missing_filled": self.missing_filled,
            "centered": self.centered,
        }


def preprocess(
    stacked: np.ndarray,
    *,
    drop_missing_threshold: float | None = None,
    log_transform: bool = False,
    mad_standardize: bool = False,
    series_axes: tuple[int, ...] | None = None,
    center: bool = False,
) -> tuple[np.ndarray, PreprocessReport]:
    """Clean a stacked array (NaN marks missing); see the module docstring."""
    x = np.array(stacked, dtype=float)
    report = PreprocessReport()

    if drop_missing_threshold is not None:
        cells = float(np.prod(x.shape[1:]))
        frac = np.isnan(x).reshape(x.shape[0], -1).sum(axis=1) / cells
        keep = frac <= drop_missing_threshold
        report.dropped_units = [int(i) for i in np.flatnonzero(~keep)]
        x = x[keep]
        if x.shape[0] == 0:
            raise ValueError("missing-data threshold removed every unit")

    if log_transform:
        bad = np.isfinite(x) & (x <= 0.0)
        report.log_skipped = int(bad.sum())
        x[bad] = np.nan
        pos = np.isfinite(x)
        x[pos] = np.log(x[pos])

    if mad_standardize:
        axes = (x.ndim - 1,) if series_axes is None else tuple(series_axes)
        if any(not 0 <= a < x.ndim for a in axes):
            raise ValueError(f"series axes {axes} out of range for order {x.ndim}")
        over = tuple(a for a in range(x.ndim) if a not in axes)
        if not over:
            raise ValueError("series axes cover every axis; nothing to average over")
        with np.errstate(invalid="ignore"):
            mean = np.nanmean(x, axis=over, keepdims=True)
            mad = np.nanmean(np.abs(x - mean), axis=over, keepdims=True)
        zero = ~(mad > 0)
        report.constant_series = int(zero.sum())
        mad_safe = np.where(zero, 1.0, mad)
        x = (x - mean) / mad_safe
        # constant series carry no information at unit scale; exclude them
        x = np.where(np.broadcast_to(zero, x.shape), np.nan, x)

    missing = ~np.isfinite(x)
    report.missing_filled = int(missing.sum())
    x[missing] = 0.0

    if center:
        x = x - x.mean(axis=0, keepdims=True)
        report.centered = True
    return x, report


@dataclass
class AnalysisResult:
    regime: str
    alpha: float
    n: int
    dims: tuple[int, ...]
    loadings: list[list[np.ndarray]]  # [k][q] debiased coordinates
    se: list[list[np.ndarray]]
    lo: list[list[np.ndarray]]
    hi: list[list[np.ndarray]]
    z: list[list[np.ndarray]]
    reject: list[list[np.ndarray]]
    values: list[float]
    shares: list[float]
    sigma0_sq: float
    sigma_sq: list[float]
    fitted_components: list[dict]
    preprocess: PreprocessReport
    notes: list[str]

    def to_dict(self) -> dict:
        grid = lambda g: [[np.asarray(v).tolist() for v in row] for row in g]
        return {
            "regime": self.regime,
            "alpha": self.alpha,
            "n": self.n,
            "dims": list(self.dims),
            "loadings": grid(self.loadings),
            "se": grid(self.se),
            "lo": grid(self.lo),
            "hi": grid(self.hi),
            "z": grid(self.z),
            "reject": grid(self.reject),
            "values": list(self.values),
            "explained_share_heuristic": list(self.shares),
            "sigma0_sq": self.sigma0_sq,
            "sigma_sq": list(self.sigma_sq),
            "fitted_components": self.fitted_components,
            "preprocess": self.preprocess.to_dict(),
            "notes": list(self.notes),
        }


def run_analysis(
    stacked: np.ndarray,
    r: int,
    *,
    regime: str = "auto",
    alpha: float = 0.05,
    als: dict | None = None,
    seed: int = 0,
    drop_missing_threshold: float | None = None,
    log_transform: bool = False,
    mad_standardize: bool = False,
    series_axes: tuple[int, ...] | None = None,
    center: bool = False,
) -> AnalysisResult:
    """Preprocess, fit r components and attach coordinate-wise CIs."""
    clean, prep = preprocess(
        stacked,
        drop_missing_threshold=drop_missing_threshold,
        log_transform=log_transform,
        mad_standardize=mad_standardize,
        series_axes=series_axes,
        center=center,
    )
    n = clean.shape[0]
    dims = clean.shape[1:]
    regime_used = resolve_regime(regime, dims, n)
    cfg = AlsConfig.from_dict({**(als or {}), "seed": seed})
    need_split = regime_used in ("B", "C")
    bundle = build_bundle(
        clean,
        r,
        cfg,
        split=need_split and n >= 4,
        quarters=regime_used == "C" and n >= 8,
    )
    loadings, ses, los, his, zs, rejects = [], [], [], [], [], []
    p = len(dims)
    for k in range(r):
        row_pt, row_se, row_lo, row_hi, row_z, row_rj = [], [], [], [], [], []
        for q in range(p):
            d = dims[q]
            pts = np.zeros(d)
            se = np.zeros(d)
            lo = np.zeros(d)
            hi = np.zeros(d)
            z = np.zeros(d)
            rj = np.zeros(d, dtype=bool)
            for i in range(d):
                v = np.zeros(d)
                v[i] = 1.0
                res = infer_linear_form(
                    bundle, LinearFormTarget(k, q, v), alpha=alpha, regime=regime_used
                )
                pts[i], se[i], lo[i], hi[i] = res.point, res.se, res.lo, res.hi
                z[i], rj[i] = res.z_stat, res.reject
            row_pt.append(pts)
            row_se.append(se)
            row_lo.append(lo)
            row_hi.append(hi)
            row_z.append(z)
            row_rj.append(rj)
        loadings.append(row_pt)
        ses.append(row_se)
        los.append(row_lo)
        his.append(row_hi)
        zs.append(row_z)
        rejects.append(row_rj)
    total = float(np.sum(bundle.variances.sigma_sq)) + bundle.variances.sigma0_sq * float(
        np.prod(dims)
    )
    shares = [float(s) / total if total > 0 else float("nan") for s in bundle.variances.sigma_sq]
    from .estimator import components_to_json

    return AnalysisResult(
        regime=regime_used,
        alpha=alpha,
        n=n,
        dims=dims,
        loadings=loadings,
        se=ses,
        lo=los,
        hi=his,
        z=zs,
        reject=rejects,
        values=[c.value for c in bundle.components],
        shares=shares,
        sigma0_sq=bundle.variances.sigma0_sq,
        sigma_sq=[float(s) for s in bundle.variances.sigma_sq],
        fitted_components=components_to_json(bundle.components),
        preprocess=prep,
        notes=list(bundle.notes),
    )


def write_analysis(result: AnalysisResult, out_dir, *, figures: bool = True) -> list[Path]:
    """Write loadings.csv, report.json and optional loading figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    loadings_path = out / "loadings.csv"
    with loadings_path.open("w") as fh:
        fh.write("component,mode,index,estimate,se,lo,hi,z,reject,regime\n")
        for k in range(len(result.loadings)):
            for q in range(len(result.dims)):
                for i in range(result.dims[q]):
                    cells = (
                        result.loadings[k][q][i],
                        result.se[k][q][i],
                        result.lo[k][q][i],
                        result.hi[k][q][i],
                        result.z[k][q][i],
                    )
                    tail = ",".join(repr(float(c)) for c in cells)
                    reject = bool(result.reject[k][q][i])
                    fh.write(
                        f"{k + 1},{q + 1},{i + 1},{tail},{reject},{result.regime}\n"
                    )
    written.append(loadings_path)

    report_path = out / "report.json"
    with report_path.open("w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(report_path)

    if figures:
        from .figures import render_loading_figures

        written.extend(render_loading_figures(result, out))
    return written
