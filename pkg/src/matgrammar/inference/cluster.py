"""Clustering initialization: collapsed Gibbs in a Dirichlet process mixture.

Rows are assigned through the Chinese restaurant process with cluster
centers integrated out; after sampling, the realized clusters convert to
the finite one-hot representation with sampled center rows.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class DPConfig:
    sweeps: int = 200
    alpha: float = 1.0


def crp_weights(counts, alpha):
    """Unnormalized CRP reassignment weights: existing counts and alpha."""
    return np.append(np.asarray(counts, dtype=float), alpha)


def _cluster_stats(S, z, K, d):
    sums = np.zeros((K, d))
    counts = np.zeros(K)
    for c in range(K):
        members = z == c
        counts[c] = members.sum()
        if counts[c]:
            sums[c] = S[members].sum(axis=0)
    return sums, counts


def dp_mixture_gibbs(S, mask, hyper, cfg, rng):
    """Collapsed CRP sweeps over row assignments; returns assignments and
    sampled centers.

    Model: row i | z_i = c ~ N(mu_c, sig2 I); mu_c ~ N(0, tau2 I); centers
    are collapsed during reassignment and sampled afterwards.
    """
    S = np.asarray(S, dtype=float)
    n, d = S.shape
    mask = np.ones_like(S, dtype=bool) if mask is None else mask
    X = np.where(mask, S, 0.0)
    var0 = max(float(np.var(X[mask])), 1e-6)
    sig2 = var0 / 2
    tau2 = var0
    z = np.zeros(n, dtype=int)
    mu = X.mean(axis=0, keepdims=True).copy()

    for sweep in range(cfg.sweeps):
        if not mask.all():
            X = np.where(mask, S, mu[z] + rng.standard_normal((n, d)) * np.sqrt(sig2))
        K = mu.shape[0]
        sums, counts = _cluster_stats(X, z, K, d)
        for i in range(n):
            c_old = z[i]
            sums[c_old] -= X[i]
            counts[c_old] -= 1
            if counts[c_old] == 0:
                sums = np.delete(sums, c_old, axis=0)
                counts = np.delete(counts, c_old)
                z[z > c_old] -= 1
                K -= 1
            # posterior predictive per existing cluster (centers collapsed)
            post_prec = 1.0 / tau2 + counts / sig2
            post_var = 1.0 / post_prec
            pred_var = post_var + sig2
            m = (sums / sig2) * post_var[:, None]
            diff = X[i][None, :] - m
            ll = -0.5 * d * np.log(2 * np.pi * pred_var) \
                 - 0.5 * (diff * diff).sum(axis=1) / pred_var
            new_var = tau2 + sig2
            ll_new = -0.5 * d * np.log(2 * np.pi * new_var) \
                     - 0.5 * (X[i] * X[i]).sum() / new_var
            logw = np.append(np.log(counts) + ll, np.log(cfg.alpha) + ll_new)
            logw -= logw.max()
            w = np.exp(logw)
            c = int(rng.choice(K + 1, p=w / w.sum()))
            if c == K:
                sums = np.vstack([sums, np.zeros(d)])
                counts = np.append(counts, 0.0)
                K += 1
            z[i] = c
            sums[c] += X[i]
            counts[c] += 1
        # sample centers and variances given assignments
        post_prec = 1.0 / tau2 + counts / sig2
        post_var = 1.0 / post_prec
        mu = (sums / sig2) * post_var[:, None] \
            + rng.standard_normal((K, d)) * np.sqrt(post_var)[:, None]
        resid = X - mu[z]
        prec = rng.gamma(hyper.gamma_a + 0.5 * n * d,
                         1.0 / (hyper.gamma_b + 0.5 * np.sum(resid * resid)))
        sig2 = 1.0 / float(prec)
        prec_mu = rng.gamma(hyper.gamma_a + 0.5 * K * d,
                            1.0 / (hyper.gamma_b + 0.5 * np.sum(mu * mu)))
        tau2 = 1.0 / float(prec_mu)
    return z, mu


def init_cluster(S, mask, hyper, rng, cfg=None):
    """Fit a row clustering of S; returns (assign, centers, residual)."""
    cfg = cfg or DPConfig()
    z, mu = dp_mixture_gibbs(S, mask, hyper, cfg, rng)
    n = S.shape[0]
    K = mu.shape[0]
    assign = np.zeros((n, K))
    assign[np.arange(n), z] = 1.0
    mask = np.ones_like(np.asarray(S), dtype=bool) if mask is None else mask
    residual = np.where(mask, S - assign @ mu, 0.0)
    return assign, mu, residual
