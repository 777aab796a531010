import numpy as np
import pytest

from matgrammar.components import HyperParams, integration_matrix
from matgrammar.config import RunConfig
from matgrammar.expr import canonicalize, infer_dims, leaf_g, leaves
from matgrammar.grammar import apply_rule, successors
from matgrammar.rng import derive_rng


def random_structure(seed, max_steps=3, min_steps=0):
    """A random grammar-generated structure with its derivation."""
    rng = np.random.default_rng(seed)
    expr = canonicalize(leaf_g())
    derivation = []
    n_steps = int(rng.integers(min_steps, max_steps + 1))
    for _ in range(n_steps):
        succ = successors(expr)
        child, rule_id, site = succ[int(rng.integers(len(succ)))]
        derivation.append((rule_id, site))
        expr = child
    return expr, tuple(derivation)


def random_binding(expr, n, d, seed, latent=3):
    """Dimension-consistent random leaf values for evaluate()."""
    rng = np.random.default_rng(seed)
    dims = infer_dims(expr, n, d, default_latent=latent)
    binding = {}
    for leaf in leaves(expr):
        r, c = dims.leaf_dims[leaf.id]
        if leaf.kind == "G":
            binding[leaf.id] = rng.standard_normal((r, c))
        elif leaf.kind == "M":
            m = np.zeros((r, c))
            m[np.arange(r), rng.integers(0, c, size=r)] = 1.0
            binding[leaf.id] = m
        elif leaf.kind == "B":
            binding[leaf.id] = (rng.random((r, c)) < 0.5).astype(float)
        else:
            binding[leaf.id] = integration_matrix(r)
    return binding, dims


@pytest.fixture
def quick_cfg():
    return RunConfig(seed=0, init_sweeps=30, init_burn=15, gibbs_sweeps=20,
                     n_samples=4, ais_temps=10, ais_runs=3,
                     hyper=HyperParams()).resolved()


@pytest.fixture
def rng():
    return derive_rng(12345, "tests")
