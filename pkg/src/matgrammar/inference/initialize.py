"""Structure initialization by derivation replay.

Each production rule has an initializer that samples its generative model
conditioned on evaluating exactly to the target matrix S (the current value
of the rewritten leaf).  Replaying a derivation applies those initializers
step by step; a cache keyed by derivation prefix lets higher-level
structures reuse the fits of the structures they extend.
"""

import numpy as np

from ..components import ComponentMatrix, resample_hyperparams
from ..expr import canonicalize, infer_dims, leaf_g
from ..grammar import RULE_BY_ID, apply_rule
from .binary import IBPConfig, init_binary
from .cluster import DPConfig, init_cluster
from .gibbs import resample_noise
from .lowrank import RJConfig, init_low_rank
from .markov import init_markov
from .state import DecompositionState, component_axis_flags, make_integration_component


def _one_hot_prior(n, k, hyper, rng):
    pi = rng.dirichlet(np.full(k, hyper.dirichlet_alpha))
    z = rng.choice(k, size=n, p=pi)
    M = np.zeros((n, k))
    M[np.arange(n), z] = 1.0
    return M


def init_random(S, rule_id, hyper, rng, latent=10):
    """Random decomposition absorbing S exactly; rules without a dedicated
    initializer (3, 5, 7, 8)."""
    S = np.asarray(S, dtype=float)
    n, d = S.shape
    k = max(1, min(latent, n, d))
    if rule_id == "3":
        assign = _one_hot_prior(n, k, hyper, rng)
        centers = rng.standard_normal((k, d)) * max(np.std(S), 1e-3)
        return {"assign": assign, "centers": centers,
                "noise": S - assign @ centers}
    if rule_id == "5":
        scale = rng.standard_normal(S.shape)
        weights = S / np.exp(scale)
        return {"scale": scale, "weights": weights}
    if rule_id == "7":
        features = (rng.random((n, k)) < rng.beta(hyper.beta_a, hyper.beta_b,
                                                  size=k)).astype(float)
        weights = rng.standard_normal((k, d)) * max(np.std(S), 1e-3)
        return {"features": features, "weights": weights,
                "noise": S - features @ weights}
    if rule_id == "8":
        return {"features": S.copy()}
    raise ValueError(f"rule {rule_id} has a dedicated initializer")


def run_rule_initializer(rule_id, S, mask, hyper, cfg, rng):
    """Role-name -> value matrices for one production applied to target S."""
    init_cfg_rj = RJConfig(sweeps=cfg.init_sweeps, burn=cfg.init_burn,
                           rate=cfg.rj_rate, dim_cap=cfg.dim_cap)
    init_cfg_dp = DPConfig(sweeps=cfg.init_sweeps, alpha=cfg.dp_alpha)
    init_cfg_ibp = IBPConfig(sweeps=cfg.init_sweeps, alpha=cfg.ibp_alpha,
                             max_features=cfg.ibp_max_features)
    if rule_id == "1":
        U, V, resid = init_low_rank(S, mask, hyper, rng, init_cfg_rj)
        return {"left": U, "right": V, "noise": resid}
    if rule_id in ("2a", "2b"):
        if rule_id == "2a":
            assign, centers, resid = init_cluster(S, mask, hyper, rng, init_cfg_dp)
            return {"assign": assign, "centers": centers, "noise": resid}
        tmask = None if mask is None else mask.T
        assign, centers, resid = init_cluster(S.T, tmask, hyper, rng, init_cfg_dp)
        return {"assign": assign, "centers": centers.T, "noise": resid.T}
    if rule_id in ("4a", "4b"):
        if rule_id == "4a":
            inc, _, resid = init_markov(S, mask, hyper, rng,
                                        sweeps=max(20, cfg.init_sweeps // 4))
            return {"chain": None, "state": inc, "noise": resid}
        tmask = None if mask is None else mask.T
        inc, _, resid = init_markov(S.T, tmask, hyper, rng,
                                    sweeps=max(20, cfg.init_sweeps // 4))
        return {"chain": None, "state": inc.T, "noise": resid.T}
    if rule_id in ("6a", "6b"):
        if rule_id == "6a":
            B, W, resid = init_binary(S, mask, hyper, rng, init_cfg_ibp)
            return {"features": B, "weights": W, "noise": resid}
        tmask = None if mask is None else mask.T
        B, W, resid = init_binary(S.T, tmask, hyper, rng, init_cfg_ibp)
        return {"features": B, "weights": W.T, "noise": resid.T}
    return init_random(S, rule_id, hyper, rng, latent=cfg.latent_default)


def _root_state(X, mask, hyper, rng):
    expr = canonicalize(leaf_g())
    n, d = X.shape
    state = DecompositionState.empty(expr, n, d, hyper)
    comp = ComponentMatrix("G", np.where(mask, X, 0.0), True, True,
                           {"row_prec": 1.0, "col_prec": 1.0})
    state.binding[0] = comp
    resample_noise(state, X, mask, rng)
    return state


def extend_state(state, rule_id, site, roles_values, X, mask, rng):
    """Apply one production to a fitted state, installing the new leaves."""
    rule = RULE_BY_ID[rule_id]
    child_expr, roles, kept = apply_rule(state.expr, rule, site)
    child = DecompositionState.empty(child_expr, state.n, state.d, state.hyper,
                                     derivation=state.derivation + ((rule_id, site),))
    for old_id, (new_id, flipped) in kept.items():
        comp = state.binding[old_id]
        child.binding[new_id] = comp.copy()
    kinds = {"assign": "M", "centers": "G", "left": "G", "right": "G",
             "noise": "G", "chain": "C", "state": "G", "scale": "G",
             "weights": "G", "features": "B"}
    for role_name in rule.roles:
        new_id, flipped = roles[role_name]
        kind = kinds[role_name]
        if rule_id in ("7", "8") and role_name == "features":
            kind = "B"
        if rule_id == "8":
            kind = "B"
        value = roles_values.get(role_name)
        row_data, col_data = component_axis_flags(child.axes, new_id)
        if kind == "C":
            size = state.binding[site].value.shape[0 if rule_id == "4a" else 1]
            comp = make_integration_component(size)
            comp.row_is_data, comp.col_is_data = row_data, col_data
        else:
            stored = value.T if (flipped and kind == "G") else value
            comp = ComponentMatrix(kind, np.array(stored, dtype=float),
                                   row_data, col_data)
            if kind == "G":
                comp.params = {"row_prec": 1.0, "col_prec": 1.0}
            elif kind == "M":
                comp.params = {"pi": np.full(stored.shape[1],
                                             1.0 / max(stored.shape[1], 1))}
            elif kind == "B":
                comp.params = {"pi": np.full(stored.shape[1], 0.5)}
            resample_hyperparams(comp, state.hyper, rng)
        child.binding[new_id] = comp
    resample_noise(child, X, mask, rng)
    return child


def initialize_structure(X, expr, derivation, hyper, cfg, rng, mask=None,
                         cache=None, counter=None):
    """Replay a derivation on X, running one initializer per step.

    cache maps derivation prefixes to fitted states; the longest cached
    prefix is reused, so extending an already-fit structure runs exactly one
    new initializer.  counter, when given, collects initializer call counts.
    """
    X = np.asarray(X, dtype=float)
    mask = np.ones_like(X, dtype=bool) if mask is None else np.asarray(mask, bool)
    derivation = tuple(tuple(step) for step in derivation)
    start = 0
    state = None
    if cache is not None:
        for cut in range(len(derivation), 0, -1):
            hit = cache.get(derivation[:cut])
            if hit is not None:
                state = hit.copy()
                start = cut
                break
    if state is None:
        state = _root_state(X, mask, hyper, rng)
        if cache is not None:
            cache[()] = state.copy()
    for i in range(start, len(derivation)):
        rule_id, site = derivation[i]
        S_site = state.binding[site].value
        site_mask = mask if (state.expr == canonicalize(leaf_g())) else None
        roles_values = run_rule_initializer(rule_id, S_site, site_mask, hyper,
                                            cfg, rng)
        if counter is not None:
            counter.append((rule_id, S_site.shape))
        state = extend_state(state, rule_id, site, roles_values, X, mask, rng)
        if cache is not None:
            cache[derivation[:i + 1]] = state.copy()
    if expr is not None and state.expr != expr:
        raise ValueError(
            f"derivation does not produce the requested structure")
    return state
