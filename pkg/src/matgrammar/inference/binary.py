"""Binary-feature initialization: linear-Gaussian Indian buffet process
Gibbs sampling with split-merge proposals.

Existing-feature assignments are sampled given explicit weights (fast
residual updates); feature counts move through per-row Poisson singleton
proposals, and occasional split/merge moves use the collapsed likelihood
with the weights integrated out to escape local modes.
"""

from dataclasses import dataclass
from math import lgamma

import numpy as np

from .gibbs import mh_log_accept


@dataclass
class IBPConfig:
    sweeps: int = 200
    alpha: float = 2.0
    max_features: int = 25
    split_merge_every: int = 2
    collapsed_every: int = 5   # full collapsed entry sweeps (slower, mix better)


def collapsed_loglik(S, Z, sig2, sw2):
    """log p(S | Z) with the Gaussian weights integrated out."""
    n, d = S.shape
    K = Z.shape[1]
    if K == 0:
        return -0.5 * d * n * np.log(2 * np.pi * sig2) \
            - 0.5 * np.sum(S * S) / sig2
    _, logdet = np.linalg.slogdet((sw2 / sig2) * (Z.T @ Z) + np.eye(K))
    A = Z.T @ S
    H = np.linalg.inv(Z.T @ Z + (sig2 / sw2) * np.eye(K))
    quad = np.sum(S * S) - np.einsum("kd,kl,ld->", A, H, A)
    return -0.5 * d * n * np.log(2 * np.pi * sig2) - 0.5 * d * logdet \
        - 0.5 * quad / sig2


def ibp_log_prior(Z, alpha):
    """log of the IBP probability of the (left-ordered class of) Z."""
    n, K = Z.shape
    harm = np.sum(1.0 / np.arange(1, n + 1))
    if K == 0:
        return -alpha * harm
    m = Z.sum(axis=0)
    if np.any(m == 0):
        return -np.inf
    out = K * np.log(alpha) - alpha * harm
    for mk in m:
        out += lgamma(n - mk + 1) + lgamma(mk) - lgamma(n + 1)
    _, counts = np.unique(Z.T, axis=0, return_counts=True)
    out -= sum(lgamma(c + 1) for c in counts)
    return out


def _sample_weights(X, Z, sig2, sw2, rng):
    K = Z.shape[1]
    if K == 0:
        return np.zeros((0, X.shape[1]))
    H = np.linalg.inv(Z.T @ Z + (sig2 / sw2) * np.eye(K))
    mean = H @ (Z.T @ X)
    cw = np.linalg.cholesky(sig2 * H + 1e-12 * np.eye(K))
    return mean + cw @ rng.standard_normal((K, X.shape[1]))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.clip(x, -500, 500)))


def ibp_gibbs(S, mask, hyper, cfg, rng):
    """IBP chain over (Z, W); returns (Z, W, sig2) at the final sweep."""
    S = np.asarray(S, dtype=float)
    n, d = S.shape
    mask = np.ones_like(S, dtype=bool) if mask is None else mask
    var0 = max(float(np.var(S[mask])), 1e-6)
    sig2, sw2 = var0 / 2, var0
    Z = np.zeros((n, 0))    # grow features from an empty matrix
    X = np.where(mask, S, 0.0)
    W = _sample_weights(X, Z, sig2, sw2, rng)

    for sweep in range(cfg.sweeps):
        if not mask.all():
            X = np.where(mask, S, Z @ W + rng.standard_normal((n, d)) * np.sqrt(sig2))
        m = Z.sum(axis=0)
        for i in range(n):
            resid = X[i] - Z[i] @ W
            for k in range(Z.shape[1]):
                m_rest = m[k] - Z[i, k]
                if m_rest == 0:
                    continue
                r_off = resid + Z[i, k] * W[k]
                gain = (np.dot(W[k], r_off) - 0.5 * np.dot(W[k], W[k])) / sig2
                log_odds = np.log(m_rest) - np.log(n - m_rest) + gain
                b = 1.0 if rng.random() < _sigmoid(log_odds) else 0.0
                m[k] += b - Z[i, k]
                resid = r_off - b * W[k]
                Z[i, k] = b
            # replace this row's singleton features with a Poisson draw; the
            # singleton weights are integrated out, so the ratio only needs
            # the row residual under inflated variance
            singles = [k for k in range(Z.shape[1]) if m[k] == Z[i, k] == 1.0]
            k_old = len(singles)
            k_new = int(rng.poisson(cfg.alpha / n))
            if Z.shape[1] - k_old + k_new > cfg.max_features or k_new == k_old:
                continue
            r_rest = resid + sum(W[k] for k in singles) if singles else resid

            def row_marginal(kk):
                var = sig2 + kk * sw2
                return -0.5 * (d * np.log(var) + np.dot(r_rest, r_rest) / var)

            if np.log(rng.random()) < mh_log_accept(row_marginal(k_new),
                                                    row_marginal(k_old)):
                keep = [k for k in range(Z.shape[1]) if k not in singles]
                Z = Z[:, keep]
                if k_new:
                    cols = np.zeros((n, k_new))
                    cols[i] = 1.0
                    Z = np.column_stack([Z, cols])
                W = _sample_weights(X, Z, sig2, sw2, rng)
                m = Z.sum(axis=0)
        keep = Z.sum(axis=0) > 0
        Z, W = Z[:, keep], W[keep]
        if cfg.collapsed_every and (sweep % cfg.collapsed_every == 0):
            Z = collapsed_entry_sweep(X, Z, sig2, sw2, rng)
        if cfg.split_merge_every and (sweep % cfg.split_merge_every == 0):
            Z = split_merge_move(X, Z, sig2, sw2, cfg.alpha, rng, cfg.max_features)
        W = _sample_weights(X, Z, sig2, sw2, rng)
        K = Z.shape[1]
        if K:
            sw2 = 1.0 / float(rng.gamma(
                hyper.gamma_a + 0.5 * K * d,
                1.0 / (hyper.gamma_b + 0.5 * np.sum(W * W))))
        resid = X - Z @ W
        sig2 = 1.0 / float(rng.gamma(
            hyper.gamma_a + 0.5 * n * d,
            1.0 / (hyper.gamma_b + 0.5 * np.sum(resid * resid))))
    return Z, W, sig2


def collapsed_entry_sweep(X, Z, sig2, sw2, rng):
    """One pass of entry Gibbs with the weights integrated out.

    Slower than the explicit-weight sweep but able to retire redundant
    features whose weights would otherwise keep their entries pinned.
    """
    n = X.shape[0]
    Z = Z.copy()
    for i in range(n):
        for k in range(Z.shape[1]):
            m_rest = Z[:, k].sum() - Z[i, k]
            if m_rest == 0:
                continue
            lls = np.empty(2)
            for b in (0, 1):
                Z[i, k] = b
                lls[b] = collapsed_loglik(X, Z, sig2, sw2)
            log_odds = np.log(m_rest) - np.log(n - m_rest) + lls[1] - lls[0]
            Z[i, k] = 1.0 if rng.random() < _sigmoid(log_odds) else 0.0
    keep = Z.sum(axis=0) > 0
    return Z[:, keep]


def _allocate_split(X, Zrest, union_rows, sig2, sw2, rng, forced=None):
    """Sequentially allocate union rows to child features a, b, or both.

    Each row's choice comes from the restricted collapsed conditional given
    the allocations so far.  With forced choices the same kernel is replayed
    to evaluate the reverse-proposal probability of a merge.  Returns
    (za, zb, total log proposal probability).
    """
    n = X.shape[0]
    za = np.zeros(n)
    zb = np.zeros(n)
    logq = 0.0
    options = ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
    for i in union_rows:
        lls = np.empty(3)
        for c, (va, vb) in enumerate(options):
            za[i], zb[i] = va, vb
            Zc = np.column_stack([Zrest, za, zb])
            lls[c] = collapsed_loglik(X, Zc, sig2, sw2)
        lls -= lls.max()
        probs = np.exp(lls)
        probs /= probs.sum()
        if forced is None:
            c = int(rng.choice(3, p=probs))
        else:
            c = forced[i]
        logq += float(np.log(max(probs[c], 1e-300)))
        za[i], zb[i] = options[c]
    return za, zb, logq


def split_merge_move(X, Z, sig2, sw2, alpha, rng, max_features):
    """Sequentially-allocated split/merge Metropolis-Hastings proposal."""
    K = Z.shape[1]
    if K == 0:
        return Z
    do_merge = (rng.random() < 0.5 and K >= 2) or K + 1 > max_features
    ll_old = collapsed_loglik(X, Z, sig2, sw2)
    lp_old = ibp_log_prior(Z, alpha)
    if do_merge and K >= 2:
        a, b = sorted(rng.choice(K, size=2, replace=False))
        union = np.flatnonzero((Z[:, a] + Z[:, b]) > 0)
        merged = np.zeros(Z.shape[0])
        merged[union] = 1.0
        Zrest = np.delete(Z, [a, b], axis=1)
        Z2 = np.column_stack([Zrest, merged])
        # reverse move: a split of the merged feature reproducing (a, b)
        forced = {}
        for i in union:
            if Z[i, a] and Z[i, b]:
                forced[i] = 2
            elif Z[i, a]:
                forced[i] = 0
            else:
                forced[i] = 1
        _, _, logq_alloc = _allocate_split(X, Zrest, union, sig2, sw2, rng,
                                           forced=forced)
        logq_fwd = np.log(0.5) - np.log(K * (K - 1) / 2)
        logq_rev = np.log(0.5) - np.log(K - 1) + logq_alloc
    else:
        k = int(rng.integers(K))
        union = np.flatnonzero(Z[:, k])
        Zrest = np.delete(Z, k, axis=1)
        za, zb, logq_alloc = _allocate_split(X, Zrest, union, sig2, sw2, rng)
        if za.sum() == 0 or zb.sum() == 0 or K + 1 > max_features:
            return Z
        Z2 = np.column_stack([Zrest, za, zb])
        logq_fwd = np.log(0.5) - np.log(K) + logq_alloc
        logq_rev = np.log(0.5) - np.log((K + 1) * K / 2)
    ll_new = collapsed_loglik(X, Z2, sig2, sw2)
    lp_new = ibp_log_prior(Z2, alpha)
    if np.log(rng.random()) < mh_log_accept(ll_new + lp_new, ll_old + lp_old,
                                            logq_fwd, logq_rev):
        return Z2
    return Z


def init_binary(S, mask, hyper, rng, cfg=None):
    """Fit binary features B W ~ S; returns (B, W, residual)."""
    cfg = cfg or IBPConfig()
    Z, W, _ = ibp_gibbs(S, mask, hyper, cfg, rng)
    mask = np.ones_like(np.asarray(S), dtype=bool) if mask is None else mask
    residual = np.where(mask, S - Z @ W, 0.0)
    return Z, W, residual
