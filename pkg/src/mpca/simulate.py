"""Monte-Carlo harness for the synthetic benchmark configurations.

A run draws ``replicates`` independent samples from a spiked model,
estimates and debiases the components on each, aligns the estimates
against the ground truth, and records per-replicate target coordinates,
confidence intervals and bias factors. Alignment follows the benchmark
convention: estimates are ordered by ascending angle between their first
mode vector and the first true component's, then every mode vector's sign
is flipped to have nonnegative inner product with its true counterpart.

Replicate ``i`` uses seed ``base_seed + i`` for data, solver and split
streams, so runs are reproducible replicate-by-replicate and independent
of worker scheduling. The aggregated report is byte-stable across repeat
runs except for its ``timing`` entry.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .debias import build_bundle
from .estimator import AlsConfig
from .inference import (
    LinearFormTarget,
    infer_linear_form,
    resolve_regime,
    theoretical_density,
)
from .model import NOISE_KINDS, SpikedModel, make_model, sample
from .tensors import sin_angle

__all__ = ["RunConfig", "PRESETS", "preset_config", "run_simulation", "write_outputs"]

DEFAULT_TARGETS = ((1, 1, 1), (1, 1, 2), (1, 1, 3), (2, 1, 1), (2, 1, 2))

HISTOGRAM_BINS = 30


@dataclass(frozen=True)
class RunConfig:
    """One simulation campaign; targets are 1-based (component, mode, coord)."""

    dims: tuple[int, ...] = (10, 10)
    n: int = 200
    sigma: tuple[float, ...] = (2.0, 2.0)
    sigma0: float = 1.0
    noise: str = "gaussian"
    components_mode: str = "rotated"
    replicates: int = 300
    seed: int = 42
    regime: str = "auto"
    alpha: float = 0.05
    targets: tuple[tuple[int, int, int], ...] = DEFAULT_TARGETS
    als: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        object.__setattr__(
            self, "targets", tuple(tuple(int(x) for x in t) for t in self.targets)
        )
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}")
        if len(self.sigma) > min(self.dims):
            raise ValueError("more spikes than the smallest dimension")
        for k, q, c in self.targets:
            if not 1 <= k <= len(self.sigma):
                raise ValueError(f"target component {k} out of range")
            if not 1 <= q <= len(self.dims):
                raise ValueError(f"target mode {q} out of range")
            if not 1 <= c <= self.dims[q - 1]:
                raise ValueError(f"target coordinate {c} out of range")
        AlsConfig.from_dict({"seed": 0, **self.als})

    @property
    def r(self) -> int:
        return len(self.sigma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        d["sigma"] = list(self.sigma)
        d["targets"] = [list(t) for t in self.targets]
        return d

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        cfg = dict(cfg)
        if "r" in cfg:
            r = int(cfg.pop("r"))
            if r != len(cfg.get("sigma", ())):
                raise ValueError("r does not match the number of sigma entries")
        unknown = set(cfg) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        for key in ("dims", "sigma"):
            if key in cfg:
                cfg[key] = tuple(cfg[key])
        if "targets" in cfg:
            cfg["targets"] = tuple(tuple(t) for t in cfg["targets"])
        return cls(**cfg)


PRESETS: dict[str, RunConfig] = {
    "paper-low": RunConfig(
        dims=(10, 10), n=200, sigma=(2.0, 2.0), sigma0=1.0, noise="gaussian"
    ),
    "paper-high": RunConfig(
        dims=(50, 50), n=400, sigma=(3.0, 3.0), sigma0=1.0, noise="gaussian"
    ),
    "paper-poisson-low": RunConfig(
        dims=(10, 10), n=200, sigma=(2.0, 2.0), sigma0=1.0, noise="centered-poisson"
    ),
    "paper-poisson-high": RunConfig(
        dims=(50, 50), n=400, sigma=(3.0, 3.0), sigma0=1.0, noise="centered-poisson"
    ),
}


def preset_config(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; options: {sorted(PRESETS)}")
    base = PRESETS[name].to_dict()
    base.update(overrides)
    return RunConfig.from_dict(base)


def _target_id(k: int, q: int, c: int) -> str:
    return f"k{k}q{q}e{c}"


def _build_truth(cfg: RunConfig) -> SpikedModel:
    return make_model(
        cfg.dims,
        cfg.sigma,
        cfg.sigma0,
        components_mode=cfg.components_mode,
        seed=cfg.seed,
    )


def _align_family(vectors, truth: SpikedModel):
    """Order estimates by ascending first-mode angle to the first true
    component, then sign-align every mode vector against its true
    counterpart. Returns (order, aligned[slot][q], signs[slot][q])."""
    r = truth.r
    p = truth.order
    ref = truth.components[0].factors[0]
    angles = [sin_angle(vectors[k][0], ref) for k in range(r)]
    order = list(np.argsort(angles, kind="stable"))
    aligned = []
    signs = []
    for slot, k in enumerate(order):
        row = []
        sign_row = []
        for q in range(p):
            v = vectors[k][q]
            s = -1.0 if float(v @ truth.components[slot].factors[q]) < 0 else 1.0
            row.append(s * v)
            sign_row.append(s)
        aligned.append(row)
        signs.append(sign_row)
    return order, aligned, signs


def run_replicate(cfg: RunConfig, index: int) -> dict:
    """Generate, fit, debias and summarize one replicate (never raises)."""
    try:
        truth = _build_truth(cfg)
        seed_i = cfg.seed + index
        data = sample(truth, cfg.n, cfg.noise, seed=seed_i)
        als = AlsConfig.from_dict({**cfg.als, "seed": seed_i})
        bundle = build_bundle(data, cfg.r, als, split=True, quarters=True)
        regime = resolve_regime(cfg.regime, cfg.dims, cfg.n)
        record: dict = {"replicate": index, "ok": True, "regime": regime}

        families: dict[str, list[list[np.ndarray]]] = {
            "components": [list(c.factors) for c in bundle.components],
            "one_step": bundle.one_step,
        }
        if bundle.cross_fit is not None:
            families["cross_fit"] = bundle.cross_fit
        fam_info: dict[str, dict] = {}
        for name, vectors in families.items():
            order, aligned, signs = _align_family(vectors, truth)
            alignment = [
                [
                    float(aligned[j][q] @ truth.components[j].factors[q])
                    for q in range(truth.order)
                ]
                for j in range(truth.r)
            ]
            fam_info[name] = {
                "order": order,
                "aligned": aligned,
                "signs": signs,
                "alignment": alignment,
            }
            record[f"order_{name}"] = [int(x) for x in order]
            record[f"alignment_{name}"] = alignment

        regime_family = "one_step" if regime == "A" else "cross_fit"
        if regime_family not in fam_info:
            raise RuntimeError(f"regime {regime} needs split estimates")
        info = fam_info[regime_family]
        order = info["order"]
        record["sigma0_sq"] = bundle.variances.sigma0_sq
        record["sigma_sq"] = [float(bundle.variances.sigma_sq[k]) for k in order]
        if bundle.bias_empirical is not None:
            record["bias_empirical"] = [
                [float(bundle.bias_empirical[k, q]) for q in range(truth.order)]
                for k in order
            ]
        if bundle.bias_explicit is not None:
            record["bias_explicit_plugin"] = [
                [float(bundle.bias_explicit[k, q]) for q in range(truth.order)]
                for k in order
            ]
        if bundle.half_relabels is not None:
            record["relabel_identity"] = [
                list(p) == sorted(p) for p in bundle.half_relabels
            ]
            # quality of the half-to-full matching after relabeling: the
            # assignment is unambiguous when every matched pair is close
            worst = 0.0
            for half in bundle.half_components:
                for k, comp in enumerate(half):
                    prod = 1.0
                    for q in range(truth.order):
                        prod *= float(
                            comp.factors[q] @ bundle.components[k].factors[q]
                        )
                    worst = max(worst, np.sqrt(max(0.0, 1.0 - min(prod * prod, 1.0))))
            record["relabel_worst_sin"] = float(worst)

        targets = {}
        for k1, q1, c1 in cfg.targets:
            slot, q, coord = k1 - 1, q1 - 1, c1 - 1
            bundle_k = order[slot]
            # flipping the probe instead of the stored estimate keeps the
            # inference code sign-agnostic
            v = np.zeros(cfg.dims[q])
            v[coord] = info["signs"][slot][q]
            res = infer_linear_form(
                bundle,
                LinearFormTarget(bundle_k, q, v),
                alpha=cfg.alpha,
                regime=regime,
            )
            true_val = float(truth.components[slot].factors[q][coord])
            targets[_target_id(k1, q1, c1)] = {
                **res.to_row(),
                "true": true_val,
                "covered": bool(res.lo <= true_val <= res.hi),
            }
        record["targets"] = targets
        return record
    except Exception as exc:  # noqa: BLE001 - per-replicate fault isolation
        return {"replicate": index, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def _replicate_star(args):
    cfg_dict, index = args
    return run_replicate(RunConfig.from_dict(cfg_dict), index)


def _aggregate(cfg: RunConfig, truth: SpikedModel, records: list[dict]) -> dict:
    ok = [r for r in records if r["ok"]]
    tids = [_target_id(*t) for t in cfg.targets]
    coverage = {}
    points = {tid: [] for tid in tids}
    for tid in tids:
        covered = rejected = 0
        for rec in ok:
            row = rec["targets"][tid]
            points[tid].append(row["point"])
            covered += bool(row["covered"])
            rejected += bool(row["reject"])
        n_ok = len(ok)
        coverage[tid] = {
            "n_ok": n_ok,
            "covered": covered,
            "coverage_rate": covered / n_ok if n_ok else float("nan"),
            "rejected": rejected,
            "rejection_rate": rejected / n_ok if n_ok else float("nan"),
            "true": ok[0]["targets"][tid]["true"] if ok else float("nan"),
        }
    scaled_var = {}
    for tid in tids:
        arr = np.asarray(points[tid])
        scaled_var[tid] = float(cfg.n * np.var(arr, ddof=1)) if arr.size > 1 else float("nan")
    scaled_cov = {}
    for i in range(len(tids)):
        for j in range(i + 1, len(tids)):
            a = np.asarray(points[tids[i]])
            b = np.asarray(points[tids[j]])
            if a.size > 1:
                c = float(cfg.n * np.cov(a, b, ddof=1)[0, 1])
            else:
                c = float("nan")
            scaled_cov[f"{tids[i]}|{tids[j]}"] = c

    def _family_mean(key: str):
        rows = [np.asarray(rec[key]) for rec in ok if key in rec]
        if not rows:
            return None
        return np.mean(rows, axis=0).tolist()

    aggregates = {
        "n_failed": len(records) - len(ok),
        "coverage": coverage,
        "n_var": scaled_var,
        "n_cov": scaled_cov,
        "alignment_mean_components": _family_mean("alignment_components"),
        "alignment_mean_one_step": _family_mean("alignment_one_step"),
        "alignment_mean_cross_fit": _family_mean("alignment_cross_fit"),
        "bias_empirical_mean": _family_mean("bias_empirical"),
    }
    relabels = [rec["relabel_identity"] for rec in ok if "relabel_identity" in rec]
    if relabels:
        flat = [all(flags) for flags in relabels]
        aggregates["relabel_identity_rate"] = sum(flat) / len(flat)
    worst = [rec["relabel_worst_sin"] for rec in ok if "relabel_worst_sin" in rec]
    if worst:
        aggregates["relabel_unambiguous_rate"] = float(
            np.mean([w < 0.5 for w in worst])
        )

    histograms = {}
    for tid in tids:
        arr = np.asarray(points[tid])
        if arr.size:
            counts, edges = np.histogram(arr, bins=HISTOGRAM_BINS)
            histograms[tid] = {"edges": edges.tolist(), "counts": counts.tolist()}

    overlays = {}
    for k1, q1, c1 in cfg.targets:
        u = truth.components[k1 - 1].factors[q1 - 1]
        v = np.zeros(cfg.dims[q1 - 1])
        v[c1 - 1] = 1.0
        mean, sd = theoretical_density(cfg.sigma0, cfg.sigma[k1 - 1], u, v, cfg.n)
        overlays[_target_id(k1, q1, c1)] = {"mean": mean, "sd": sd}

    return {"aggregates": aggregates, "histograms": histograms, "overlays": overlays}


def run_simulation(cfg: RunConfig, jobs: int = 1) -> dict:
    """Run all replicates and assemble the report dict.

    The report is independent of ``jobs``; worker results are merged in
    replicate order. Raises RuntimeError when more than 10% of replicates
    fail, matching the campaign-level error contract.
    """
    start = time.perf_counter()
    truth = _build_truth(cfg)
    indices = list(range(cfg.replicates))
    if jobs > 1:
        cfg_dict = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_replicate_star, [(cfg_dict, i) for i in indices]))
    else:
        records = [run_replicate(cfg, i) for i in indices]
    records.sort(key=lambda r: r["replicate"])
    report = {
        "config": cfg.to_dict(),
        "regime": resolve_regime(cfg.regime, cfg.dims, cfg.n),
        "truth": {
            "sigma": list(cfg.sigma),
            "sigma0": cfg.sigma0,
            "components": [c.to_dict() for c in truth.components],
        },
        "replicates": records,
    }
    report.update(_aggregate(cfg, truth, records))
    n_failed = report["aggregates"]["n_failed"]
    report["timing"] = {
        "elapsed_seconds": time.perf_counter() - start,
        "jobs": jobs,
    }
    if n_failed > 0.1 * cfg.replicates:
        raise RuntimeError(
            f"{n_failed} of {cfg.replicates} replicates failed; aborting"
        )
    return report


def write_outputs(report: dict, out_dir, *, figures: bool = True) -> list[Path]:
    """Write report.json, histogram.csv, coverage.csv and optional figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = out / "report.json"
    with report_path.open("w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(report_path)

    hist_path = out / "histogram.csv"
    with hist_path.open("w") as fh:
        fh.write("target,bin_lo,bin_hi,count\n")
        for tid in sorted(report["histograms"]):
            h = report["histograms"][tid]
            for b in range(len(h["counts"])):
                fh.write(
                    f"{tid},{h['edges'][b]!r},{h['edges'][b + 1]!r},{h['counts'][b]}\n"
                )
    written.append(hist_path)

    cov_path = out / "coverage.csv"
    with cov_path.open("w") as fh:
        fh.write(
            "target,true_value,n_ok,covered,coverage_rate,rejected,rejection_rate\n"
        )
        for tid in sorted(report["aggregates"]["coverage"]):
            row = report["aggregates"]["coverage"][tid]
            fh.write(
                f"{tid},{row['true']!r},{row['n_ok']},{row['covered']},"
                f"{row['coverage_rate']!r},{row['rejected']},{row['rejection_rate']!r}\n"
            )
    written.append(cov_path)

    if figures:
        from .figures import render_histogram_figures

        written.extend(render_histogram_figures(report, out))
    return written
