"""Figure rendering for run reports (score curves and sorted heatmaps)."""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.dpi"] = 120
plt.rcParams["savefig.bbox"] = "tight"
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def score_curve_figure(result, path):
    """Best predictive score per level, annotated with structure text."""
    best = result.best_per_level()
    levels = np.arange(len(best))
    scores = [c.total for c in best]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(levels, scores, "o-", color="tab:blue")
    for lv, cand in zip(levels, best):
        ax.annotate(cand.structure, (lv, cand.total), fontsize=8,
                    textcoords="offset points", xytext=(4, 6))
    ax.axvline(result.selected_level, color="tab:red", ls="--", lw=1,
               label=f"selected: {result.selected}")
    ax.set_xlabel("search level")
    ax.set_ylabel("held-out predictive score (nats)")
    ax.set_xticks(levels)
    ax.legend(loc="lower right", fontsize=8)
    fig.savefig(path)
    plt.close(fig)
    return path


def heatmap_figure(X, row_order, row_bounds, col_order, col_bounds, path,
                   title=None):
    """Data heatmap with rows/columns sorted by the fitted clustering."""
    X = np.asarray(X, dtype=float)
    Xs = X[np.ix_(row_order, col_order)]
    lim = np.nanpercentile(np.abs(Xs), 98) or 1.0
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(Xs, cmap="RdBu_r", vmin=-lim, vmax=lim, aspect="auto",
              interpolation="nearest")
    for b in row_bounds:
        ax.axhline(b - 0.5, color="blue", lw=0.8)
    for b in col_bounds:
        ax.axvline(b - 0.5, color="blue", lw=0.8)
    ax.set_xlabel("columns (sorted)")
    ax.set_ylabel("rows (sorted)")
    ax.grid(False)
    if title:
        ax.set_title(title, fontsize=10)
    fig.savefig(path)
    plt.close(fig)
    return path


def render_figures(out_dir, X, result, state):
    from .report import sorted_heatmap_orders
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    paths = [score_curve_figure(result, os.path.join(fig_dir, "score_curve.png"))]
    row_order, row_bounds, col_order, col_bounds = \
        sorted_heatmap_orders(X, state)
    paths.append(heatmap_figure(
        X, row_order, row_bounds, col_order, col_bounds,
        os.path.join(fig_dir, "heatmap.png"),
        title=f"rows/columns sorted under {result.selected}"))
    return paths, (row_order, row_bounds, col_order, col_bounds)
