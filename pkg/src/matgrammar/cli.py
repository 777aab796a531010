"""Command-line interface: search, table1, enumerate, synth, score."""

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from .components import HyperParams
from .config import REDUCED_PRESET, RunConfig
from .errors import (
    DimensionConflict,
    InvalidHyper,
    MatGrammarError,
    NumericalFailure,
    ParseError,
    RaggedRows,
    TooSmall,
)
from .expr import parse, to_text
from .grammar import derivation_of, enumerate_to_level
from .inference.gibbs import gibbs_sweep
from .inference.initialize import initialize_structure
from .report import (
    ReportVersionError,
    build_report,
    check_overwrite,
    sorted_heatmap_orders,
    write_orders,
    write_report,
    write_score_curves,
    write_timings,
)
from .rng import derive_rng
from .scoring import holdout_from_fractions, score_structure
from .search import greedy_search
from .synthesis import SIGMA_GRID, TABLE1_STRUCTURES, SynthSpec, generate, table1_harness

log = logging.getLogger("matgrammar")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

DATA_ERRORS = (ParseError, RaggedRows, TooSmall, DimensionConflict,
               ReportVersionError, FileNotFoundError)


def load_matrix(path, header_row=False, header_col=False):
    """Parse a CSV file into (matrix, observed-mask).

    Empty cells and the literal NaN become unobserved entries; anything
    else must parse as a real number.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such input file: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for r, row in enumerate(reader):
            if header_row and r == 0:
                continue
            if header_col and row:
                row = row[1:]
            if not row:
                continue
            parsed = []
            for c, cell in enumerate(row):
                cell = cell.strip()
                if cell == "" or cell.lower() == "nan":
                    parsed.append(np.nan)
                    continue
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"cannot parse cell {cell!r} at row {r + 1}, "
                        f"column {c + 1}", row=r + 1, col=c + 1)
            rows.append(parsed)
    if not rows:
        raise ParseError("empty input file")
    width = len(rows[0])
    for r, row in enumerate(rows):
        if len(row) != width:
            raise RaggedRows(f"row {r + 1} has {len(row)} cells, expected {width}")
    X = np.array(rows, dtype=float)
    mask = ~np.isnan(X)
    return np.where(mask, X, 0.0), mask


def _config_from_args(args):
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        base = loaded.get("config", loaded)
    overrides = {}
    for field_name, attr in [
            ("input", "input"), ("seed", "seed"), ("holdout_rows", "holdout_rows"),
            ("holdout_cols", "holdout_cols"), ("K", "K"),
            ("max_level", "max_level"), ("jobs", "jobs"), ("out", "out"),
            ("init_sweeps", "init_sweeps"), ("gibbs_sweeps", "gibbs_sweeps"),
            ("n_samples", "n_samples"), ("latent_default", "latent"),
            ("save_components", "save_components"),
            ("header_row", "header_row"), ("header_col", "header_col")]:
        val = getattr(args, attr, None)
        if val is not None:
            overrides[field_name] = val
    merged = {**base, **overrides}
    if isinstance(merged.get("hyper"), dict):
        merged["hyper"] = HyperParams(**merged["hyper"])
    return RunConfig(**merged).resolved()


def _add_shared_flags(p, with_search=True):
    p.add_argument("--input", help="CSV data matrix")
    p.add_argument("--config", help="JSON config (or a previous report.json)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--holdout-rows", dest="holdout_rows", type=float, default=None)
    p.add_argument("--holdout-cols", dest="holdout_cols", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--header-row", dest="header_row", action="store_const",
                   const=True, default=None)
    p.add_argument("--header-col", dest="header_col", action="store_const",
                   const=True, default=None)
    if with_search:
        p.add_argument("--K", dest="K", type=int, default=None)
        p.add_argument("--max-level", dest="max_level", type=int, default=None)
        p.add_argument("--init-sweeps", dest="init_sweeps", type=int, default=None)
        p.add_argument("--gibbs-sweeps", dest="gibbs_sweeps", type=int, default=None)
        p.add_argument("--n-samples", dest="n_samples", type=int, default=None)
        p.add_argument("--latent", type=int, default=None)
        p.add_argument("--save-components", dest="save_components",
                       action="store_const", const=True, default=None)
    return p


def _fit_selected(X, mask, result, cfg):
    """Refit the selected structure on the full matrix for reporting."""
    selected = result.selected
    for cand in result.levels[result.selected_level]:
        if cand.structure == selected:
            derivation = cand.derivation
            break
    rng = derive_rng(cfg.seed, "final-fit", selected)
    state = initialize_structure(X, parse(selected), derivation, cfg.hyper,
                                 cfg, rng, mask=mask)
    for _ in range(max(10, cfg.gibbs_sweeps // 4)):
        gibbs_sweep(state, X, mask, rng)
    return state


def _component_summaries(state, save_values):
    out = []
    from .expr import leaves
    for leaf in leaves(state.expr):
        comp = state.binding[leaf.id]
        rec = {"leaf": leaf.id, "kind": comp.kind,
               "shape": list(comp.value.shape),
               "params": {k: (np.asarray(v).tolist())
                          for k, v in comp.params.items()}}
        if save_values:
            rec["value"] = comp.value.tolist()
        out.append(rec)
    return out


def cmd_search(args):
    cfg = _config_from_args(args)
    if not cfg.input:
        print("search requires --input (or a config with one)", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.time()
    X, mask = load_matrix(cfg.input, cfg.header_row, cfg.header_col)
    check_overwrite(cfg.out, force=args.force)
    result = greedy_search(X, mask, cfg)
    state = _fit_selected(X, mask, result, cfg)
    extra = {"fitted_components": _component_summaries(state,
                                                       cfg.save_components)}
    report = build_report(result, cfg, extra=extra)
    os.makedirs(cfg.out, exist_ok=True)
    path = write_report(cfg.out, report)
    write_score_curves(cfg.out, result)
    row_order, row_bounds, col_order, col_bounds = \
        sorted_heatmap_orders(X, state)
    write_orders(cfg.out, row_order, row_bounds, col_order, col_bounds)
    from .plots import render_figures
    render_figures(cfg.out, X, result, state)
    write_timings(cfg.out, {"wall_seconds": time.time() - t0})
    print(f"selected structure: {result.selected} (level "
          f"{result.selected_level}, {result.stop_reason})")
    print(f"report written to {path}")
    return EXIT_OK


def cmd_table1(args):
    cfg = _config_from_args(args)
    if args.preset == "reduced":
        merged = {**cfg.to_dict(), **REDUCED_PRESET}
        merged["hyper"] = cfg.hyper
        cfg = RunConfig(**merged).resolved()
    names = args.structures.split(",") if args.structures else None
    if names:
        unknown = [n for n in names if n not in TABLE1_STRUCTURES]
        if unknown:
            print(f"unknown structures: {unknown}; choose from "
                  f"{sorted(TABLE1_STRUCTURES)}", file=sys.stderr)
            return EXIT_USAGE
    sigma2s = [float(s) for s in args.sigma2.split(",")] if args.sigma2 else None
    seeds = list(range(args.seeds))
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)

    def progress(cell):
        status = "ok" if not cell.error else f"failed: {cell.error}"
        print(f"[{cell.name} sigma2={cell.sigma2} seed={cell.seed}] "
              f"selected {cell.selected or '-'} "
              f"(generator={'yes' if cell.matches_generator else 'no'}) {status}")

    cells = table1_harness(cfg, names=names, sigma2s=sigma2s, seeds=seeds,
                           n=args.n, d=args.d, latent_dim=args.latent or 10,
                           progress=progress)
    path = os.path.join(out_dir, "recovery.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "structure", "sigma2", "seed", "selected",
                    "matches_generator", "matches_reported", "error"])
        for c in cells:
            w.writerow([c.name, c.structure, c.sigma2, c.seed, c.selected,
                        int(c.matches_generator), int(c.matches_reported),
                        c.error or ""])
    by_cell = {}
    for c in cells:
        by_cell.setdefault((c.name, c.sigma2), []).append(c.matches_generator)
    print("\nrecovery fractions (generator recovered):")
    for (name, s2), flags in sorted(by_cell.items()):
        print(f"  {name:14s} sigma2={s2:<5} {sum(flags)}/{len(flags)}")
    print(f"table written to {path}")
    return EXIT_OK


def cmd_enumerate(args):
    structures = enumerate_to_level(args.level)
    texts = sorted(to_text(e) for e in structures)
    if not args.count_only:
        for t in texts:
            print(t)
    print(f"# {len(texts)} distinct canonical structures within "
          f"{args.level} productions (including the start symbol); "
          f"{len(texts) - 1} reachable in 1..{args.level} steps")
    print("# convention: transposes pushed to leaves (transposed Gaussian "
          "leaves normalized to plain), sums/products flattened, no "
          "quotient by whole-structure transposition")
    return EXIT_OK


def cmd_synth(args):
    cfg = _config_from_args(args)
    spec = SynthSpec(structure=args.structure, n=args.n, d=args.d,
                     latent_dim=args.latent or 10,
                     signal_variance=args.signal_var,
                     noise_variance=args.sigma2, seed=cfg.seed)
    X, state, signal = generate(spec, cfg.hyper)
    out = args.out_file or "synth.csv"
    np.savetxt(out, X, delimiter=",", fmt="%.10g")
    print(f"wrote {X.shape[0]}x{X.shape[1]} matrix from {args.structure} "
          f"(sigma2={args.sigma2}) to {out}")
    if args.truth:
        truth = {"structure": args.structure,
                 "signal_variance": float(np.var(signal)),
                 "noise_variance": args.sigma2,
                 "components": _component_summaries(state, True)}
        with open(args.truth, "w") as fh:
            json.dump(truth, fh, indent=2, sort_keys=True)
        print(f"wrote ground truth to {args.truth}")
    return EXIT_OK


def cmd_score(args):
    cfg = _config_from_args(args)
    if not cfg.input:
        print("score requires --input", file=sys.stderr)
        return EXIT_USAGE
    X, mask = load_matrix(cfg.input, cfg.header_row, cfg.header_col)
    expr = parse(args.structure)
    holdout = holdout_from_fractions(X, cfg.holdout_rows, cfg.holdout_cols,
                                     cfg.holdout_seed)
    rng = derive_rng(cfg.seed, "structure", to_text(expr))
    score = score_structure(expr, X, mask, holdout, cfg, rng,
                            derivation=derivation_of(expr))
    print(f"structure: {score.structure}")
    print(f"total predictive score: {score.total:.4f} nats "
          f"({score.row_scores.size} rows, {score.col_scores.size} cols, "
          f"{score.n_samples} posterior samples)")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "score.json"), "w") as fh:
            json.dump({"structure": score.structure, "total": score.total,
                       "row_scores": score.row_scores.tolist(),
                       "col_scores": score.col_scores.tolist(),
                       "n_samples": score.n_samples},
                      fh, indent=2, sort_keys=True)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="matgrammar",
        description="Structure discovery over a grammar of matrix "
                    "decomposition models")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="greedy structure search on a matrix")
    _add_shared_flags(p)
    p.add_argument("--force", action="store_true",
                   help="overwrite newer-versioned reports")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("table1", help="synthetic recovery harness")
    _add_shared_flags(p)
    p.add_argument("--structures", help="comma list, e.g. low-rank,clustering")
    p.add_argument("--sigma2", help="comma list of noise variances")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--preset", choices=["full", "reduced"], default="full")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("enumerate", help="list canonical structures by level")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--count-only", dest="count_only", action="store_true")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("synth", help="generate synthetic data")
    _add_shared_flags(p, with_search=True)
    p.add_argument("--structure", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--signal-var", dest="signal_var", type=float, default=1.0)
    p.add_argument("--out-file", dest="out_file")
    p.add_argument("--truth", help="write ground-truth JSON here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("score", help="score one structure on a matrix")
    _add_shared_flags(p)
    p.add_argument("--structure", required=True)
    p.set_defaults(func=cmd_score)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvalidHyper as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MatGrammarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
