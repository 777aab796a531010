"""Greedy K-best search over the grammar with the one-nat stopping rule."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .expr import canonicalize, leaf_g, parse, to_text
from .grammar import successors
from .scoring import holdout_from_fractions, score_structure
from .rng import derive_rng

log = logging.getLogger("matgrammar.search")


@dataclass
class Candidate:
    structure: str
    derivation: tuple
    score: object = None          # PredictiveScore or None on failure
    total: float = -np.inf
    status: str = "pending"       # scored | failed
    error: str = None


@dataclass
class SearchResult:
    levels: list                  # list of lists of Candidate, sorted desc
    selected: str
    selected_level: int
    stop_reason: str
    holdout: object
    n: int
    d: int

    def best_per_level(self):
        return [lvl[0] for lvl in self.levels if lvl]


def stopping_decision(s_prev, s_new, n, d):
    """Accept the newer level iff it improves by more than one nat per
    row and column: (s_new - s_prev) / (n + d) > 1, strictly."""
    return (s_new - s_prev) / (n + d) > 1.0


def select_final(levels, n, d):
    """Highest level whose best beats the previous level's best; else 0."""
    chosen = 0
    for i in range(1, len(levels)):
        if not levels[i] or not np.isfinite(levels[i][0].total):
            break
        if stopping_decision(levels[i - 1][0].total, levels[i][0].total, n, d):
            chosen = i
        else:
            break
    return chosen


def _score_task(args):
    (text, derivation, X, mask, holdout, cfg, parent_state) = args
    cache = {}
    if parent_state is not None:
        cache[parent_state.derivation] = parent_state
    rng = derive_rng(cfg.seed, "structure", text)
    expr = parse(text)
    try:
        score = score_structure(expr, X, mask, holdout, cfg, rng,
                                derivation=derivation, cache=cache,
                                structure_text=text)
        init_state = cache.get(tuple(derivation))
        return text, score, None, init_state
    except Exception as exc:  # noqa: BLE001 - a failing structure must not abort
        return text, None, f"{type(exc).__name__}: {exc}", None


def greedy_search(X, mask, cfg, rng=None, holdout=None):
    """Score level by level, expanding the top K structures each round.

    Returns a SearchResult whose levels hold every scored candidate in
    descending score order; failing structures are recorded with -inf.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    mask = np.ones_like(X, dtype=bool) if mask is None else np.asarray(mask, bool)
    cfg = cfg.resolved()
    if holdout is None:
        holdout = holdout_from_fractions(X, cfg.holdout_rows, cfg.holdout_cols,
                                         cfg.holdout_seed)
    cache = {}
    seen = set()

    def run_level(cands):
        tasks = []
        for cand in cands:
            parent = cache.get(tuple(cand.derivation[:-1])) \
                if cand.derivation else None
            tasks.append((cand.structure, cand.derivation, X, mask, holdout,
                          cfg, parent))
        if cfg.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_score_task, tasks))
        else:
            results = [_score_task(t) for t in tasks]
        by_text = {r[0]: r for r in results}
        for cand in cands:
            text, score, err, init_state = by_text[cand.structure]
            if score is not None:
                cand.score = score
                cand.total = score.total
                cand.status = "scored"
                if init_state is not None:
                    cache[tuple(cand.derivation)] = init_state
            else:
                cand.status = "failed"
                cand.error = err
                log.warning("structure %s failed: %s", text, err)
        cands.sort(key=lambda c: (-c.total, c.structure))
        return cands

    root = canonicalize(leaf_g())
    seen.add(root)
    level0 = run_level([Candidate(structure=to_text(root), derivation=())])
    levels = [level0]
    log.info("level 0: 1 structure, best %s score %.2f",
             level0[0].structure, level0[0].total)

    stop_reason = "max-level"
    for level in range(1, cfg.max_level + 1):
        frontier = [c for c in levels[-1][:cfg.K] if c.status == "scored"]
        cands = []
        for parent in frontier:
            pexpr = parse(parent.structure)
            for child, rule_id, site in successors(pexpr):
                if child in seen:
                    continue
                seen.add(child)
                cands.append(Candidate(
                    structure=to_text(child),
                    derivation=tuple(parent.derivation) + ((rule_id, site),)))
        if not cands:
            stop_reason = "threshold-not-met"
            break
        cands = run_level(cands)
        levels.append(cands)
        prev_best = levels[-2][0].total
        best = cands[0].total
        log.info("level %d: %d structures, best %s score %.2f, "
                 "improvement/(N+D) %.3f", level, len(cands),
                 cands[0].structure, best, (best - prev_best) / (n + d))
        if not stopping_decision(prev_best, best, n, d):
            stop_reason = "threshold-not-met"
            break

    chosen = select_final(levels, n, d)
    return SearchResult(levels=levels, selected=levels[chosen][0].structure,
                        selected_level=chosen, stop_reason=stop_reason,
                        holdout=holdout, n=n, d=d)
