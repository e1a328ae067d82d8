"""Figure builders: multi-seed curves, estimation-rate fit, table-size bars.

Every builder is deterministic: fixed method ordering (alphabetical), fixed
colors, Agg backend, and no timestamps in the image payload.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from gsac_plots.io import (  # noqa: E402
    METRICS_COLUMNS,
    RATE_COLUMNS,
    TABLE_COLUMNS,
    read_csv_rows,
)

# One fixed color per method so panels stay comparable across figures.
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")
_SAVEFIG_KWARGS = {"dpi": 100, "metadata": {"Software": "gsac-plots"}}


@dataclass(frozen=True)
class CurveSpec:
    """What to read, how to group, and where to write one figure."""

    csv_paths: tuple[str, ...]
    out_path: str
    group_cols: tuple[str, ...] = ("method", "grid_size", "omega_target")
    smoothing: int = 1

    def __post_init__(self):
        if not self.csv_paths:
            raise ValueError("CurveSpec needs at least one CSV path")
        if self.smoothing < 1:
            raise ValueError(f"smoothing window must be >= 1, got {self.smoothing}")


def _smooth(y: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return y
    kernel = np.ones(window) / window
    return np.convolve(y, kernel, mode="valid")


def _panel_curves(rows: list[dict], phase: str, smoothing: int):
    """{grid_size: {method: (episodes, mean, std)}} aggregated across seeds."""
    grouped: dict = {}
    for r in rows:
        if r["phase"] != phase:
            continue
        key = (int(r["grid_size"]), r["method"])
        grouped.setdefault(key, {}).setdefault(int(r["k_or_episode"]), []).append(
            float(r["return_discounted"])
        )
    panels: dict = {}
    for (grid, method), per_k in sorted(grouped.items()):
        ks = np.array(sorted(per_k))
        mean = np.array([np.mean(per_k[k]) for k in ks])
        std = np.array([np.std(per_k[k]) for k in ks])
        if smoothing > 1 and len(ks) >= smoothing:
            ks = ks[smoothing - 1:]
            mean = _smooth(mean, smoothing)
            std = _smooth(std, smoothing)
        panels.setdefault(grid, {})[method] = (ks, mean, std)
    return panels


def _render_panels(panels: dict, spec: CurveSpec, xlabel: str, title: str) -> str:
    if not panels:
        raise ValueError(f"no rows matched the requested phase in {spec.csv_paths}")
    grids = sorted(panels)
    methods = sorted({m for p in panels.values() for m in p})
    colors = {m: _PALETTE[i % len(_PALETTE)] for i, m in enumerate(methods)}
    fig, axes = plt.subplots(
        1, len(grids), figsize=(4.2 * len(grids), 3.4), squeeze=False, sharey=True
    )
    for ax, grid in zip(axes[0], grids):
        for method in methods:
            if method not in panels[grid]:
                continue
            ks, mean, std = panels[grid][method]
            ax.plot(ks, mean, label=method, color=colors[method], linewidth=1.5)
            ax.fill_between(ks, mean - std, mean + std,
                            color=colors[method], alpha=0.2, linewidth=0)
        ax.set_title(f"grid size {grid}")
        ax.set_xlabel(xlabel)
        ax.grid(True, alpha=0.3)
    axes[0][0].set_ylabel("discounted return")
    axes[0][0].legend(loc="lower right", fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(spec.out_path)), exist_ok=True)
    fig.savefig(spec.out_path, **_SAVEFIG_KWARGS)
    plt.close(fig)
    return spec.out_path


def plot_adaptation(spec: CurveSpec) -> str:
    """One panel per grid size; per-method mean +/- std band over seeds of the
    adaptation-phase returns."""
    rows = read_csv_rows(spec.csv_paths, METRICS_COLUMNS)
    panels = _panel_curves(rows, "adapt", spec.smoothing)
    return _render_panels(panels, spec, "adaptation episode", "Few-shot adaptation")


def plot_training(spec: CurveSpec) -> str:
    """Same layout as plot_adaptation, for the training-phase returns."""
    rows = read_csv_rows(spec.csv_paths, METRICS_COLUMNS)
    panels = _panel_curves(rows, "train", spec.smoothing)
    return _render_panels(panels, spec, "outer iteration", "Meta-training")


def fit_rate_slope(t_es: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(mean error) against log(T_e)."""
    t = np.asarray(t_es, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(t) < 2:
        raise ValueError("slope fit needs at least two distinct sample sizes")
    if np.any(e <= 0):
        raise ValueError("errors must be positive for a log-log fit")
    return float(np.polyfit(np.log(t), np.log(e), 1)[0])


def plot_estimation_rate(spec: CurveSpec) -> tuple[str, float | None]:
    """Mean |estimate - truth| vs sample size on log-log axes.

    Draws a reference -1/2 slope line and the fitted slope when two or more
    distinct sample sizes are present; a single sample size renders as a
    scatter with no fit (returned slope None).
    """
    rows = read_csv_rows(spec.csv_paths, RATE_COLUMNS)
    per_te: dict[float, list[float]] = {}
    for r in rows:
        per_te.setdefault(float(r["t_e"]), []).append(float(r["abs_error"]))
    t_es = np.array(sorted(per_te))
    means = np.array([np.mean(per_te[t]) for t in t_es])

    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    slope = None
    if len(t_es) >= 2:
        slope = fit_rate_slope(t_es, means)
        ax.loglog(t_es, means, "o-", color=_PALETTE[0],
                  label=f"measured (slope {slope:.2f})")
        ref = means[0] * (t_es / t_es[0]) ** -0.5
        ax.loglog(t_es, ref, "--", color="gray", label="reference slope -1/2")
        ax.legend(fontsize=8)
    else:
        ax.scatter(t_es, means, color=_PALETTE[0])
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("sample size $T_e$")
    ax.set_ylabel("mean |estimation error|")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(spec.out_path)), exist_ok=True)
    fig.savefig(spec.out_path, **_SAVEFIG_KWARGS)
    plt.close(fig)
    return spec.out_path, slope


def plot_tables(spec: CurveSpec) -> str:
    """Per-agent raw vs compact policy feature counts, grouped bars."""
    rows = read_csv_rows(spec.csv_paths, TABLE_COLUMNS)
    agents = [int(r["agent"]) for r in rows]
    raw = [int(r["raw_features"]) for r in rows]
    compact = [int(r["compact_features"]) for r in rows]
    order = np.argsort(agents)
    agents = np.asarray(agents)[order]
    raw = np.asarray(raw)[order]
    compact = np.asarray(compact)[order]

    fig, ax = plt.subplots(figsize=(max(4.5, 0.4 * len(agents)), 3.5))
    x = np.arange(len(agents))
    ax.bar(x - 0.2, raw, width=0.4, label="raw", color=_PALETTE[0])
    ax.bar(x + 0.2, compact, width=0.4, label="compact", color=_PALETTE[2])
    ax.set_xticks(x)
    ax.set_xticklabels([str(a) for a in agents], fontsize=7)
    ax.set_xlabel("agent")
    ax.set_ylabel("policy feature count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(spec.out_path)), exist_ok=True)
    fig.savefig(spec.out_path, **_SAVEFIG_KWARGS)
    plt.close(fig)
    return spec.out_path
