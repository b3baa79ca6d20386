"""File-rendered figures for score reports and parameter sweeps."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_score_report(rows: Sequence[dict], out_path: str | Path) -> Path:
    """Plot per-fragment scores with the selected fragments highlighted.

    ``rows`` follow the explain-report schema: id, loc, s_ind, s_env, s_rel,
    selected.
    """
    out_path = Path(out_path)
    locs = [row["loc"] for row in rows]
    s_ind = [row["s_ind"] for row in rows]
    s_rel = [row["s_rel"] for row in rows]
    selected = [row["loc"] for row in rows if row["selected"]]
    selected_scores = [row["s_rel"] for row in rows if row["selected"]]

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(locs, s_ind, color="0.6", lw=1.0, label="independent")
    ax.plot(locs, s_rel, color="tab:blue", lw=1.2, label="relation-aware")
    ax.scatter(selected, selected_scores, color="tab:red", zorder=3, s=24, label="selected")
    ax.set_xlabel("fragment position")
    ax.set_ylabel("score")
    ax.legend(loc="best", frameon=False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_sweep_heatmap(
    alphas: Sequence[float],
    w_rels: Sequence[float],
    grid: Sequence[Sequence[float]],
    out_path: str | Path,
    metric_label: str = "overlap with vanilla selection",
) -> Path:
    """Heatmap of a sweep metric over the (alpha, w_rel) grid."""
    out_path = Path(out_path)
    values = np.asarray(grid, dtype=np.float64)

    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(alphas), 1.2 + 0.7 * len(w_rels)))
    image = ax.imshow(values, origin="lower", aspect="auto", cmap="viridis", vmin=0.0)
    ax.set_xticks(range(len(alphas)), [f"{a:g}" for a in alphas])
    ax.set_yticks(range(len(w_rels)), [f"{w:g}" for w in w_rels])
    ax.set_xlabel("alpha")
    ax.set_ylabel("w_rel")
    for yi in range(values.shape[0]):
        for xi in range(values.shape[1]):
            ax.text(xi, yi, f"{values[yi, xi]:.2f}", ha="center", va="center",
                    color="white", fontsize=8)
    fig.colorbar(image, ax=ax, label=metric_label)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
