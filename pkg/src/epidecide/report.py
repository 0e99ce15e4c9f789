"""Report rendering: delimited results plus matplotlib figures.

One call writes, next to the CSV export, the three standard views of a
completed run: example daily-death trajectories (lockdown family vs
partial-only family), the weighted life-years-lost bars under the four
stock weightings, and the Pareto scatter on the grouped axes with
iso-utility guide lines.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .decision import WEIGHT_PRESETS, grouped_points, non_dominated_mask, rank
from .store import StoredRun, write_export

FIGURE_DPI = 150


def plot_daily_deaths(run: StoredRun, path: Path) -> Path:
    """Example-run daily deaths, split by strategy family."""
    outcomes = run.result.outcomes
    lockdown = [o for o in outcomes if not o.strategy.partial_only]
    partial_only = [o for o in outcomes if o.strategy.partial_only]
    panels = [p for p in (lockdown, partial_only) if p]
    fig, axes = plt.subplots(
        1, len(panels), figsize=(6.0 * len(panels), 4.0), squeeze=False
    )
    titles = {id(lockdown): "Lockdown strategies", id(partial_only): "No-lockdown strategies"}
    for ax, group in zip(axes[0], panels):
        for outcome in group:
            days = np.arange(1, len(outcome.example_daily_deaths) + 1)
            ax.plot(days, outcome.example_daily_deaths, label=outcome.strategy.id, lw=1.0)
        ax.set_xlabel("day")
        ax.set_ylabel("daily deaths")
        ax.set_title(titles[id(group)])
        ax.legend(fontsize=7, ncol=2)
    fig.suptitle("Daily deaths, one example simulation per strategy")
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path


def plot_weighted_scores(run: StoredRun, path: Path) -> Path:
    """Aggregate weighted life-years lost under the four stock weightings."""
    table = run.attribute_vectors()
    fig, axes = plt.subplots(2, 2, figsize=(12.0, 8.0))
    for ax, (name, weights) in zip(axes.ravel(), WEIGHT_PRESETS.items()):
        ranked = rank(weights, table)
        ids = [s.strategy_id for s in ranked]
        losses = [-s.score for s in ranked]
        colors = ["tab:orange" if i.endswith("E*") else "tab:blue" for i in ids]
        ax.bar(ids, losses, color=colors)
        ax.set_title(f"{name}  k={tuple(round(w, 3) for w in weights)}")
        ax.set_ylabel("weighted life-years lost")
        ax.tick_params(axis="x", rotation=60, labelsize=7)
    fig.suptitle("Weighted life-years lost by strategy (lower is better)")
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path


def plot_pareto(run: StoredRun, weights, path: Path) -> Path:
    """Grouped-axis scatter with the non-dominated front and weight line."""
    table = run.attribute_vectors()
    ids, points = grouped_points(table)
    mask = non_dominated_mask(points)
    fig, ax = plt.subplots(figsize=(7.0, 5.5))
    ax.scatter(
        points[~mask, 0], points[~mask, 1], c="lightgray", label="dominated", zorder=2
    )
    front = points[mask]
    order = np.argsort(front[:, 0])
    ax.plot(
        front[order, 0],
        front[order, 1],
        "o-",
        color="tab:red",
        label="Pareto front",
        zorder=3,
    )
    for sid, (x, y) in zip(ids, points):
        ax.annotate(sid, (x, y), fontsize=6, xytext=(3, 3), textcoords="offset points")

    # Iso-utility guide line through the best strategy: with grouped axes
    # the slope is -(k1 + k2)/2 / k3 (undefined when poverty has no weight).
    k1, k2, k3 = weights
    best_id = rank(weights, table)[0].strategy_id
    best_point = points[ids.index(best_id)]
    ax.scatter(*best_point, marker="*", s=220, color="tab:green", zorder=4,
               label=f"best under k={tuple(round(w, 3) for w in weights)}")
    if k3 > 0:
        slope = -((k1 + k2) / 2.0) / k3
        xs = np.linspace(points[:, 0].min(), points[:, 0].max(), 50)
        ax.plot(
            xs,
            best_point[1] + slope * (xs - best_point[0]),
            "--",
            color="tab:green",
            lw=1.0,
            label="iso-utility line",
        )
    ax.set_xlabel("life-years lost: COVID-19 + delayed cancer diagnoses")
    ax.set_ylabel("life-years lost: poverty")
    ax.set_title("Trade-off between short/medium-term and long-term losses")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path


def render_report(run: StoredRun, weights, out_dir: str | Path) -> dict[str, Path]:
    """Write the CSV table and all figures; returns the artifact paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return {
        "results": write_export(run, weights, out_dir / "results.csv"),
        "daily_deaths": plot_daily_deaths(run, out_dir / "daily_deaths.png"),
        "weighted_scores": plot_weighted_scores(run, out_dir / "weighted_scores.png"),
        "pareto": plot_pareto(run, weights, out_dir / "pareto.png"),
    }
