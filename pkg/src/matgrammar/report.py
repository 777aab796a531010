"""Run reports: a JSON document plus flat CSV files and rendered figures.

The JSON report embeds the fully resolved configuration so a run can be
replayed bit-identically; wall-clock timings go to a separate sidecar so
the report itself stays byte-stable across reruns.
"""

import csv
import json
import os

import numpy as np

from .errors import MatGrammarError
from .expr import Leaf, Product, parse
from .grammar import PLAIN, expand_allow_noise_free

SCHEMA_VERSION = 1


class ReportVersionError(MatGrammarError):
    """Refusing to overwrite a report written by a newer schema."""


def _score_record(cand):
    rec = {"structure": cand.structure,
           "derivation": [list(step) for step in cand.derivation],
           "status": cand.status}
    if cand.score is not None:
        rec.update(total=cand.total,
                   row_scores=[float(v) for v in cand.score.row_scores],
                   col_scores=[float(v) for v in cand.score.col_scores],
                   n_samples=cand.score.n_samples)
    else:
        rec.update(total=None, error=cand.error)
    return rec


def build_report(result, cfg, extra=None):
    levels = []
    for i, lvl in enumerate(result.levels):
        best = lvl[0]
        levels.append({
            "level": i,
            "evaluated": len(lvl),
            "best": best.structure,
            "best_score": best.total if np.isfinite(best.total) else None,
            "candidates": [_score_record(c) for c in lvl],
        })
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "selected_structure": result.selected,
        "selected_level": result.selected_level,
        "stop_reason": result.stop_reason,
        "holdout": {
            "held_rows": [int(i) for i in result.holdout.held_rows],
            "held_cols": [int(j) for j in result.holdout.held_cols],
            "seed": result.holdout.seed,
        },
        "levels": levels,
    }
    if extra:
        report.update(extra)
    return report


def check_overwrite(out_dir, force=False):
    path = os.path.join(out_dir, "report.json")
    if not os.path.exists(path):
        return
    try:
        with open(path) as fh:
            existing = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return
    if existing.get("schema_version", 0) > SCHEMA_VERSION and not force:
        raise ReportVersionError(
            f"existing report has schema {existing['schema_version']} > "
            f"{SCHEMA_VERSION}; pass --force to overwrite")


def write_report(out_dir, report):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_timings(out_dir, timings):
    path = os.path.join(out_dir, "timings.json")
    with open(path, "w") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_score_curves(out_dir, result):
    """Per-level score curve and the full candidate table as CSV."""
    os.makedirs(out_dir, exist_ok=True)
    curve_path = os.path.join(out_dir, "score_curve.csv")
    with open(curve_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "best_structure", "best_score",
                    "improvement_per_dim"])
        prev = None
        for i, lvl in enumerate(result.levels):
            best = lvl[0]
            imp = "" if prev is None else \
                f"{(best.total - prev) / (result.n + result.d):.6f}"
            w.writerow([i, best.structure, f"{best.total:.6f}", imp])
            prev = best.total
    table_path = os.path.join(out_dir, "level_scores.csv")
    with open(table_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "structure", "status", "total"])
        for i, lvl in enumerate(result.levels):
            for c in lvl:
                total = f"{c.total:.6f}" if np.isfinite(c.total) else ""
                w.writerow([i, c.structure, c.status, total])
    return curve_path, table_path


def sorted_heatmap_orders(X, state):
    """Row/column permutations and cluster boundaries for visualization.

    Rows and columns are sorted first by the assignment of a top-level
    one-hot or binary factor when the selected structure has one, then by
    the highest-variance latent dimension of a leading Gaussian factor.
    """
    X = np.asarray(X, dtype=float)

    def axis_order(state, size):
        sop = expand_allow_noise_free(state.expr)
        assign = None
        latent = None
        for term in sop.terms:
            if term.row_class != PLAIN:
                continue
            head = term.u_factors[0]
            if not isinstance(head, Leaf):
                continue
            comp = state.binding[head.id]
            if comp.value.shape[0] != size:
                continue
            if head.kind == "M" and assign is None:
                assign = comp.value.argmax(axis=1)
            elif head.kind == "B" and assign is None:
                weights = 2 ** np.arange(comp.value.shape[1])[::-1]
                assign = (comp.value @ weights).astype(int)
            elif head.kind == "G" and latent is None and comp.value.ndim == 2 \
                    and comp.value.shape[1] > 0:
                j = int(np.argmax(comp.value.var(axis=0)))
                latent = comp.value[:, j]
        if assign is None and latent is None:
            return np.arange(size), []
        if assign is None:
            return np.argsort(latent, kind="stable"), []
        secondary = latent if latent is not None else np.zeros(size)
        order = np.lexsort((secondary, assign))
        sorted_assign = assign[order]
        bounds = [int(i) for i in
                  np.flatnonzero(np.diff(sorted_assign)) + 1]
        return order, bounds

    from .inference.state import transpose_state
    row_order, row_bounds = axis_order(state, X.shape[0])
    tstate = transpose_state(state, state.d, state.n)
    col_order, col_bounds = axis_order(tstate, X.shape[1])
    return (np.asarray(row_order), row_bounds,
            np.asarray(col_order), col_bounds)


def write_orders(out_dir, row_order, row_bounds, col_order, col_bounds):
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, order, bounds in (("row_order.csv", row_order, row_bounds),
                                ("col_order.csv", col_order, col_bounds)):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["position", "index", "cluster_boundary"])
            bset = set(bounds)
            for pos, idx in enumerate(order):
                w.writerow([pos, int(idx), 1 if pos in bset else 0])
        paths.append(path)
    return paths
