"""Figure rendering for simulation and analysis reports.

Figures are written next to the delimited outputs; every plot can also be
reproduced from histogram.csv / loadings.csv with any external tool.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_histogram_figures", "render_loading_figures"]

_FIGSIZE = (5.2, 3.4)


def _normal_pdf(x, mean, sd):
    return np.exp(-0.5 * ((x - mean) / sd) ** 2) / (sd * np.sqrt(2.0 * np.pi))


def render_histogram_figures(report: dict, out_dir) -> list[Path]:
    """One histogram per target, overlaid with its asymptotic density."""
    out = Path(out_dir)
    written = []
    overlays = report.get("overlays", {})
    for tid in sorted(report.get("histograms", {})):
        hist = report["histograms"][tid]
        edges = np.asarray(hist["edges"])
        counts = np.asarray(hist["counts"], dtype=float)
        widths = np.diff(edges)
        total = counts.sum()
        density = counts / (total * widths) if total > 0 else counts
        fig, ax = plt.subplots(figsize=_FIGSIZE)
        ax.bar(edges[:-1], density, width=widths, align="edge",
               color="#9ecae1", edgecolor="white")
        overlay = overlays.get(tid)
        if overlay and overlay["sd"] > 0:
            lo = overlay["mean"] - 4 * overlay["sd"]
            hi = overlay["mean"] + 4 * overlay["sd"]
            grid = np.linspace(min(edges[0], lo), max(edges[-1], hi), 400)
            ax.plot(grid, _normal_pdf(grid, overlay["mean"], overlay["sd"]),
                    color="red", lw=1.5)
        ax.set_xlabel(tid)
        ax.set_ylabel("density")
        fig.tight_layout()
        path = out / f"hist_{tid}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def render_loading_figures(result, out_dir) -> list[Path]:
    """Per component and mode: loading coordinates with CI error bars."""
    out = Path(out_dir)
    written = []
    for k in range(len(result.loadings)):
        for q in range(len(result.dims)):
            est = np.asarray(result.loadings[k][q])
            lo = np.asarray(result.lo[k][q])
            hi = np.asarray(result.hi[k][q])
            x = np.arange(1, est.shape[0] + 1)
            fig, ax = plt.subplots(figsize=_FIGSIZE)
            ax.errorbar(x, est, yerr=np.vstack([est - lo, hi - est]),
                        fmt="o-", ms=3, lw=1, capsize=2)
            ax.axhline(0.0, color="gray", lw=0.8)
            ax.set_xlabel(f"mode {q + 1} index")
            ax.set_ylabel(f"component {k + 1} loading")
            fig.tight_layout()
            path = out / f"component{k + 1}_mode{q + 1}.png"
            fig.savefig(path, dpi=150)
            plt.close(fig)
            written.append(path)
    return written
