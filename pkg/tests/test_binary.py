import numpy as np

from matgrammar.components import HyperParams
from matgrammar.inference.binary import (
    IBPConfig,
    collapsed_loglik,
    ibp_log_prior,
    init_binary,
)
from matgrammar.inference.gibbs import mh_log_accept
from matgrammar.rng import derive_rng


def test_collapsed_loglik_matches_direct_integration():
    # per-column marginal covariance is sw2 * Z Z' + sig2 * I
    rng = derive_rng(0, "ibp")
    Z = (rng.random((6, 2)) < 0.5).astype(float)
    S = rng.standard_normal((6, 4))
    sig2, sw2 = 0.7, 1.3
    cov = sw2 * Z @ Z.T + sig2 * np.eye(6)
    sign, logdet = np.linalg.slogdet(cov)
    direct = 0.0
    for j in range(4):
        quad = S[:, j] @ np.linalg.solve(cov, S[:, j])
        direct += -0.5 * (6 * np.log(2 * np.pi) + logdet + quad)
    assert np.isclose(collapsed_loglik(S, Z, sig2, sw2), direct)


def test_identity_proposal_accepts_with_probability_one():
    rng = derive_rng(1, "ibp")
    Z = (rng.random((5, 2)) < 0.5).astype(float)
    S = rng.standard_normal((5, 3))
    ll = collapsed_loglik(S, Z, 1.0, 1.0)
    lp = ibp_log_prior(Z, 2.0)
    assert mh_log_accept(ll + lp, ll + lp, -1.7, -1.7) == 0.0


def test_zero_feature_model_residual_is_data():
    S = derive_rng(2, "ibp").standard_normal((7, 4))
    Z = np.zeros((7, 0))
    W = np.zeros((0, 4))
    assert np.array_equal(S - Z @ W, S)
    assert np.isfinite(collapsed_loglik(S, Z, 1.0, 1.0))


def test_planted_feature_recovery_across_seeds():
    hits = 0
    for seed in range(10):
        rng = derive_rng(seed, "planted3")
        Z0 = (rng.random((40, 3)) < 0.4).astype(float)
        W0 = rng.standard_normal((3, 80)) * 2.0
        S = Z0 @ W0 + 0.3 * rng.standard_normal((40, 80))
        B, W, resid = init_binary(S, None, HyperParams(),
                                  derive_rng(seed, "chain3"),
                                  IBPConfig(sweeps=120, alpha=1.0))
        hits += int(B.shape[1] == 3)
    assert hits >= 7


def test_residual_exact():
    rng = derive_rng(5, "ibp")
    S = rng.standard_normal((10, 6))
    B, W, resid = init_binary(S, None, HyperParams(), rng,
                              IBPConfig(sweeps=20))
    assert np.array_equal(S - B @ W, resid)
    assert set(np.unique(B)) <= {0.0, 1.0}
