import numpy as np

from matgrammar.config import RunConfig
from matgrammar.expr import parse, to_text
from matgrammar.grammar import derivation_of
from matgrammar.inference.initialize import init_random, initialize_structure
from matgrammar.rng import derive_rng

from conftest import random_structure

FAST = RunConfig(init_sweeps=8, init_burn=4, gibbs_sweeps=5, n_samples=2,
                 latent_default=4).resolved()


def test_init_random_rule5_exact():
    rng = derive_rng(0, "r5")
    S = rng.standard_normal((6, 5)) * 2
    out = init_random(S, "5", FAST.hyper, rng)
    assert np.allclose(np.exp(out["scale"]) * out["weights"], S)


def test_init_random_rule3_exact():
    rng = derive_rng(1, "r3")
    S = (np.eye(5)[np.array([0, 1, 0, 2, 1, 0])]).astype(float)
    out = init_random(S, "3", FAST.hyper, rng, latent=3)
    recon = out["assign"] @ out["centers"] + out["noise"]
    assert np.allclose(recon, S)


def test_init_random_rule8_reuses_one_hot():
    S = np.eye(3)[np.array([0, 2, 1, 1])]
    out = init_random(S, "8", FAST.hyper, derive_rng(2, "r8"))
    assert np.array_equal(out["features"], S)


def test_single_step_clustering_exact():
    rng = derive_rng(3, "step")
    X = rng.standard_normal((12, 9))
    state = initialize_structure(X, parse("MG+G"), [("2a", 0)], FAST.hyper,
                                 FAST, rng)
    assert np.max(np.abs(state.reconstruct() - X)) < 1e-9


def test_exact_conditioning_invariant_random_triples():
    failures = 0
    for seed in range(50):
        expr, derivation = random_structure(seed + 1000, max_steps=3,
                                            min_steps=1)
        rng = derive_rng(seed, "triple")
        n = int(rng.integers(8, 16))
        d = int(rng.integers(8, 16))
        X = rng.standard_normal((n, d)) * float(rng.uniform(0.5, 3.0))
        state = initialize_structure(X, expr, derivation, FAST.hyper, FAST,
                                     derive_rng(seed, "triple-init"))
        err = np.max(np.abs(state.reconstruct() - X))
        scale = max(1.0, np.max(np.abs(X)))
        if err / scale > 1e-9:
            failures += 1
    assert failures == 0


def test_masked_entries_do_not_constrain():
    rng = derive_rng(4, "mask")
    X = rng.standard_normal((10, 8))
    mask = rng.random((10, 8)) > 0.25
    state = initialize_structure(X, parse("GG+G"), [("1", 0)], FAST.hyper,
                                 FAST, rng, mask=mask)
    recon = state.reconstruct()
    assert np.max(np.abs((recon - X)[mask])) < 1e-9


def test_inner_initializer_runs_on_component():
    rng = derive_rng(5, "inner")
    X = rng.standard_normal((30, 20))
    expr = parse("M(GM'+G)+G")
    deriv = derivation_of(expr)
    counter = []
    initialize_structure(X, expr, deriv, FAST.hyper, FAST, rng,
                         counter=counter)
    assert len(counter) == 2
    # the second step decomposes the center matrix, not the data matrix
    assert counter[0][1] == (30, 20)
    assert counter[1][1][0] < 30


def test_cache_reuses_parent_fit():
    rng = derive_rng(6, "cache")
    X = rng.standard_normal((20, 15))
    cache = {}
    c1 = []
    initialize_structure(X, parse("MG+G"), [("2a", 0)], FAST.hyper, FAST,
                         derive_rng(6, "a"), cache=cache, counter=c1)
    assert len(c1) == 1
    expr2 = parse("M(GM'+G)+G")
    deriv2 = (("2a", 0), ("2b", 1))
    from matgrammar.grammar import replay_derivation
    assert replay_derivation(deriv2) == expr2
    c2 = []
    state = initialize_structure(X, expr2, deriv2, FAST.hyper, FAST,
                                 derive_rng(6, "b"), cache=cache, counter=c2)
    assert len(c2) == 1          # only the extension step ran
    assert np.max(np.abs(state.reconstruct() - X)) < 1e-9


def test_wrong_derivation_raises():
    rng = derive_rng(7, "wrong")
    X = rng.standard_normal((8, 8))
    try:
        initialize_structure(X, parse("GG+G"), [("2a", 0)], FAST.hyper, FAST,
                             rng)
        raised = False
    except ValueError:
        raised = True
    assert raised
