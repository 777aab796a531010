"""Joint-distribution testing of the Gibbs sweep (Geweke-style).

Forward samples (state, X) from the generative model; the successive-
conditional chain alternates data draws with Gibbs sweeps.  If the sweep
targets the correct conditionals, the two samplers share the joint
distribution, so statistics agree up to Monte Carlo error.
"""

import numpy as np

from matgrammar.components import HyperParams, sample_component
from matgrammar.expr import infer_dims, leaves, parse
from matgrammar.inference.gibbs import gibbs_sweep, sample_data
from matgrammar.inference.state import DecompositionState, component_axis_flags
from matgrammar.rng import derive_rng

# finite second moments for the statistics need a > 2
GEWEKE_HYPER = HyperParams(gamma_a=3.0, gamma_b=3.0)


def draw_state(text, n, d, hyper, rng, latent=2):
    expr = parse(text)
    dims = infer_dims(expr, n, d, default_latent=latent)
    state = DecompositionState.empty(expr, n, d, hyper)
    for leaf in leaves(expr):
        r, c = dims.leaf_dims[leaf.id]
        row_data, col_data = component_axis_flags(dims.leaf_axes, leaf.id)
        state.binding[leaf.id] = sample_component(
            leaf.kind, (r, c), hyper, rng, row_is_data=row_data,
            col_is_data=col_data)
    return state


def statistics(state, X):
    sig = state.signal()
    return np.array([X.mean(), (X * X).mean(), sig.mean(), (sig * sig).mean()])


def forward_samples(text, n, d, n_samples, seed, latent=2):
    out = np.zeros((n_samples, 4))
    for i in range(n_samples):
        rng = derive_rng(seed, "fwd", i)
        state = draw_state(text, n, d, GEWEKE_HYPER, rng, latent)
        X = sample_data(state, rng)
        out[i] = statistics(state, X)
    return out


def successive_samples(text, n, d, n_samples, seed, latent=2, thin=1):
    rng = derive_rng(seed, "succ")
    state = draw_state(text, n, d, GEWEKE_HYPER, rng, latent)
    X = sample_data(state, rng)
    mask = np.ones((n, d), dtype=bool)
    out = np.zeros((n_samples, 4))
    for i in range(n_samples):
        for _ in range(thin):
            gibbs_sweep(state, X, mask, rng)
            X = sample_data(state, rng)
        out[i] = statistics(state, X)
    return out


def batch_means_se(samples, n_batches=50):
    """Standard error of the mean respecting autocorrelation."""
    m = len(samples) // n_batches
    if m < 1:
        return samples.std(axis=0) / np.sqrt(len(samples))
    trimmed = samples[:m * n_batches].reshape(n_batches, m, -1)
    batch_means = trimmed.mean(axis=1)
    return batch_means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def geweke_zscores(text, n, d, n_samples, seed, latent=2):
    fwd = forward_samples(text, n, d, n_samples, seed, latent)
    succ = successive_samples(text, n, d, n_samples, seed, latent)
    se = np.sqrt(batch_means_se(fwd) ** 2 + batch_means_se(succ) ** 2)
    return (fwd.mean(axis=0) - succ.mean(axis=0)) / np.maximum(se, 1e-12)
