"""Synthetic data generation and the structure-recovery harness.

Matrices are drawn from any grammar structure: component matrices come from
their priors, the signal (everything except the trailing noise term) is
rescaled to a target empirical variance, and i.i.d. Gaussian noise of a
controlled variance is added on top.
"""

from dataclasses import dataclass, replace

import numpy as np

from .components import sample_component
from .expr import evaluate, infer_dims, parse, to_text
from .inference.state import DecompositionState, component_axis_flags
from .search import greedy_search
from .rng import derive_rng

# the ten generating structures of the recovery grid
TABLE1_STRUCTURES = {
    "low-rank": "GG+G",
    "clustering": "MG+G",
    "binary": "BG+G",
    "co-clustering": "M(GM'+G)+G",
    "bmf": "(BG+G)B'+G",
    "bctf": "(MG+G)(GM'+G)+G",
    "sparse-coding": "(exp(G)oG)G+G",
    "dependent-gsm": "(exp(GG+G)oG)G+G",
    "random-walk": "CG+G",
    "lds": "(CG+G)G+G",
}

# structures the original experiments reported per noise level (accepted
# alternates for the harness, alongside the generator itself)
REPORTED_SELECTIONS = {
    "low-rank": {0.1: "GG+G", 1.0: "GG+G", 3.0: "GG+G", 10.0: "G"},
    "clustering": {0.1: "MG+G", 1.0: "MG+G", 3.0: "MG+G", 10.0: "MG+G"},
    "binary": {0.1: "(BG+G)G+G", 1.0: "BG+G", 3.0: "BG+G", 10.0: "BG+G"},
    "co-clustering": {0.1: "M(GM'+G)+G", 1.0: "M(GM'+G)+G",
                      3.0: "M(GM'+G)+G", 10.0: "GM'+G"},
    "bmf": {0.1: "(BG+G)(GB'+G)+G", 1.0: "(BG+G)B'+G", 3.0: "GG+G",
            10.0: "GG+G"},
    "bctf": {0.1: "(MG+G)(GM'+G)+G", 1.0: "(MG+G)(GM'+G)+G", 3.0: "GM'+G",
             10.0: "G"},
    "sparse-coding": {0.1: "(exp(G)oG)G+G", 1.0: "(exp(G)oG)G+G",
                      3.0: "(exp(G)oG)G+G", 10.0: "G"},
    "dependent-gsm": {0.1: "(exp(G)oG)G+G", 1.0: "(exp(G)oG)G+G",
                      3.0: "(exp(G)oG)G+G", 10.0: "BG+G"},
    "random-walk": {0.1: "CG+G", 1.0: "CG+G", 3.0: "CG+G", 10.0: "G"},
    "lds": {0.1: "(CG+G)G+G", 1.0: "(CG+G)G+G", 3.0: "(CG+G)G+G",
            10.0: "BG+G"},
}

SIGMA_GRID = (0.1, 1.0, 3.0, 10.0)


@dataclass(frozen=True)
class SynthSpec:
    structure: str
    n: int = 200
    d: int = 200
    latent_dim: int = 10
    signal_variance: float = 1.0
    noise_variance: float = 1.0
    seed: int = 0
    unit_precisions: bool = True   # fix Gaussian leaf precisions at 1 when True


def generate(spec, hyper, rng=None):
    """Draw (X, ground-truth binding, signal) from the structure."""
    rng = rng or derive_rng(spec.seed, "synth", spec.structure)
    expr = parse(spec.structure)
    dims = infer_dims(expr, spec.n, spec.d,
                      default_latent=min(spec.latent_dim, spec.n, spec.d))
    state = DecompositionState.empty(expr, spec.n, spec.d, hyper)
    for leaf_id, (r, c) in sorted(dims.leaf_dims.items()):
        kind = _leaf_kind(expr, leaf_id)
        row_data, col_data = component_axis_flags(dims.leaf_axes, leaf_id)
        comp = sample_component(kind, (r, c), hyper, rng,
                                row_is_data=row_data, col_is_data=col_data)
        if kind == "G" and spec.unit_precisions:
            comp.params = {"row_prec": 1.0 if row_data else np.ones(r),
                           "col_prec": 1.0 if col_data else np.ones(c)}
            comp.value = rng.standard_normal((r, c))
        state.binding[leaf_id] = comp
    signal = state.signal()
    sig_var = float(np.var(signal))
    if sig_var > 0 and state.signal_expr is not None:
        signal = signal * np.sqrt(spec.signal_variance / sig_var)
    noise = rng.standard_normal((spec.n, spec.d)) * np.sqrt(spec.noise_variance)
    X = signal + noise
    if state.noise_id is not None:
        state.binding[state.noise_id].value = noise
    return X, state, signal


def _leaf_kind(expr, leaf_id):
    from .expr import leaves
    for leaf in leaves(expr):
        if leaf.id == leaf_id:
            return leaf.kind
    raise KeyError(leaf_id)


@dataclass
class RecoveryCell:
    name: str
    structure: str
    sigma2: float
    seed: int
    selected: str
    matches_generator: bool
    matches_reported: bool
    error: str = None


def table1_harness(cfg, names=None, sigma2s=None, seeds=(0,), n=200, d=200,
                   latent_dim=10, progress=None):
    """Run recovery searches over the structure/noise grid.

    Returns a list of RecoveryCell records, one per (structure, sigma2,
    seed); failures are recorded rather than raised.
    """
    names = list(names or TABLE1_STRUCTURES)
    sigma2s = list(sigma2s or SIGMA_GRID)
    cells = []
    for name in names:
        structure = TABLE1_STRUCTURES[name]
        for sigma2 in sigma2s:
            for seed in seeds:
                spec = SynthSpec(structure=structure, n=n, d=d,
                                 latent_dim=latent_dim,
                                 noise_variance=float(sigma2), seed=seed)
                X, _, signal = generate(spec, cfg.hyper)
                run_cfg = replace(cfg, seed=seed)
                try:
                    result = greedy_search(X, None, run_cfg)
                    selected = result.selected
                    err = None
                except Exception as exc:  # noqa: BLE001
                    selected, err = "", f"{type(exc).__name__}: {exc}"
                reported = REPORTED_SELECTIONS.get(name, {}).get(float(sigma2))
                cells.append(RecoveryCell(
                    name=name, structure=structure, sigma2=float(sigma2),
                    seed=seed, selected=selected,
                    matches_generator=(selected == structure),
                    matches_reported=(selected == reported
                                      or selected == structure),
                    error=err))
                if progress:
                    progress(cells[-1])
    return cells
