"""Low-rank initialization: block Gibbs matrix factorization with
reversible-jump moves on the latent dimension.

Fits S = U V + E with per-dimension variances; the dimension carries a
Poisson prior and changes through birth/death proposals drawn from the
prior, so the acceptance ratio reduces to the likelihood ratio times the
Poisson pmf ratio.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .gibbs import mh_log_accept


@dataclass
class RJConfig:
    sweeps: int = 200
    burn: int = 100
    rate: float = 5.0          # Poisson prior rate on the dimension
    dim_cap: int = 100
    k_init: int = 1


def birth_log_prior_ratio(k, rate):
    """log p(k+1)/p(k) under Poisson(rate): log(rate/(k+1))."""
    return np.log(rate) - np.log(k + 1)


def _sample_rows(T, design, w_col, prior_prec, rng):
    """Rows of Z from T ~ Z @ design + E, weights per column; independent rows."""
    p = T.shape[0]
    k = design.shape[0]
    out = np.zeros((p, k))
    base = (design * w_col) @ design.T
    for i in range(p):
        prec = base + np.diag(prior_prec[i])
        h = design @ (w_col * T[i])
        c, low = cho_factor(prec, lower=True)
        mean = cho_solve((c, low), h)
        out[i] = mean + solve_triangular(c, rng.standard_normal(k),
                                         lower=True, trans=1)
    return out


def _sample_rows_masked(T, design, W, prior_prec, rng):
    p = T.shape[0]
    k = design.shape[0]
    out = np.zeros((p, k))
    for i in range(p):
        w = W[i]
        prec = (design * w) @ design.T + np.diag(prior_prec[i])
        h = design @ (w * T[i])
        c, low = cho_factor(prec, lower=True)
        mean = cho_solve((c, low), h)
        out[i] = mean + solve_triangular(c, rng.standard_normal(k),
                                         lower=True, trans=1)
    return out


def _loglik(S, mask, U, V, noise_prec):
    resid = np.where(mask, S - U @ V, 0.0)
    n_obs = mask.sum()
    return 0.5 * n_obs * np.log(noise_prec) - 0.5 * noise_prec * np.sum(resid * resid)


def _conditional_u(resid, mask, v, u_prec, noise_prec, rng, at=None):
    """Sample (or evaluate at) the posterior of a new column u given v and
    the current residual: resid ~ u v' + E.  Returns (u, log density)."""
    vv = np.where(mask, v[None, :], 0.0)
    prec = u_prec + noise_prec * (vv * vv).sum(axis=1)
    mean = noise_prec * (resid * vv).sum(axis=1) / prec
    if at is None:
        u = mean + rng.standard_normal(mean.size) / np.sqrt(prec)
    else:
        u = at
    logq = float(np.sum(-0.5 * prec * (u - mean) ** 2
                        + 0.5 * np.log(prec / (2 * np.pi))))
    return u, logq


def _top_direction(resid, iters=12):
    """Deterministic power iteration for the leading right direction and
    the matched magnitude of the proposed factor row."""
    n, d = resid.shape
    v = resid.mean(axis=0)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        v = resid[0]
        norm = np.linalg.norm(v) + 1e-12
    v = v / norm
    for _ in range(iters):
        u = resid @ v
        nu = np.linalg.norm(u)
        if nu < 1e-12:
            break
        v = resid.T @ (u / nu)
        sigma = np.linalg.norm(v)
        if sigma < 1e-12:
            break
        v = v / sigma
    sigma = np.linalg.norm(resid @ v)
    return v * (sigma / np.sqrt(n))


def _propose_v(resid, vp_prec, rng, at=None):
    """Mixture proposal for a new factor row: prior or informed (around the
    top residual direction).  Returns (v, log mixture density)."""
    center = _top_direction(resid)
    eps = 0.3 * max(np.linalg.norm(center) / np.sqrt(center.size), 1e-6)
    d = center.size
    if at is None:
        if rng.random() < 0.5:
            v = rng.standard_normal(d) / np.sqrt(vp_prec)
        else:
            v = center + eps * rng.standard_normal(d)
    else:
        v = at
    lp_prior = float(np.sum(-0.5 * vp_prec * v * v
                            + 0.5 * np.log(vp_prec / (2 * np.pi))))
    dv = v - center
    lp_inf = float(np.sum(-0.5 * (dv / eps) ** 2) - d * np.log(eps)
                   - 0.5 * d * np.log(2 * np.pi))
    m = max(lp_prior, lp_inf)
    logq = m + np.log(0.5 * np.exp(lp_prior - m) + 0.5 * np.exp(lp_inf - m))
    return v, logq, lp_prior


def pmf_rjmcmc(S, mask, hyper, cfg, rng):
    """Gibbs + RJMCMC chain for the factorization; returns the final state.

    The returned dict has U, V, residual, k_trace (post-burn dimension
    samples) and noise_prec.
    """
    S = np.asarray(S, dtype=float)
    n, d = S.shape
    mask = np.ones_like(S, dtype=bool) if mask is None else mask
    S0 = np.where(mask, S, 0.0)
    cap = min(n, d, cfg.dim_cap)
    k = min(cfg.k_init, cap)
    scale = max(float(np.std(S0[mask])), 1e-3)
    U = rng.standard_normal((n, k)) * 0.1
    V = rng.standard_normal((k, d)) * 0.1 * scale
    u_prec = np.ones(k)
    v_prec = np.ones(k) / scale ** 2
    noise_prec = 1.0 / max(float(np.var(S0[mask])), 1e-6)
    k_trace = []
    fully_observed = bool(mask.all())

    for sweep in range(cfg.sweeps):
        X = S0 if fully_observed else np.where(mask, S, U @ V)
        if k > 0:
            w_col = np.full(d, noise_prec)
            prior = np.tile(u_prec, (n, 1))
            if fully_observed:
                U = _sample_rows(X, V, w_col, prior, rng)
            else:
                U = _sample_rows_masked(X, V, np.where(mask, noise_prec, 0.0),
                                        prior, rng)
            w_row = np.full(n, noise_prec)
            prior = np.tile(v_prec, (d, 1))
            if fully_observed:
                V = _sample_rows(X.T, U.T, w_row, prior, rng).T
            else:
                V = _sample_rows_masked(X.T, U.T,
                                        np.where(mask.T, noise_prec, 0.0),
                                        prior, rng).T
            u_prec = rng.gamma(hyper.gamma_a + 0.5 * n,
                               1.0 / (hyper.gamma_b + 0.5 * (U * U).sum(axis=0)))
            v_prec = rng.gamma(hyper.gamma_a + 0.5 * d,
                               1.0 / (hyper.gamma_b + 0.5 * (V * V).sum(axis=1)))
        resid = np.where(mask, S - U @ V, 0.0)
        noise_prec = float(rng.gamma(
            hyper.gamma_a + 0.5 * mask.sum(),
            1.0 / (hyper.gamma_b + 0.5 * np.sum(resid * resid))))

        # birth/death moves; births draw v from its prior and u from its
        # conditional posterior given v, with the proposal density in the
        # acceptance ratio
        for _ in range(2):
            cur_ll = _loglik(S, mask, U, V, noise_prec)
            if rng.random() < 0.5 and k < cap:
                up_prec = rng.gamma(hyper.gamma_a, 1.0 / hyper.gamma_b)
                vp_prec = rng.gamma(hyper.gamma_a, 1.0 / hyper.gamma_b)
                resid = np.where(mask, S - U @ V, 0.0)
                v_new, logq_v, logp_v = _propose_v(resid, vp_prec, rng)
                u_new, logq_u = _conditional_u(resid, mask, v_new, up_prec,
                                               noise_prec, rng)
                logp_u = float(np.sum(-0.5 * up_prec * u_new ** 2
                                      + 0.5 * np.log(up_prec / (2 * np.pi))))
                U2 = np.column_stack([U, u_new])
                V2 = np.vstack([V, v_new])
                new_ll = _loglik(S, mask, U2, V2, noise_prec)
                if np.log(rng.random()) < mh_log_accept(
                        new_ll + birth_log_prior_ratio(k, cfg.rate)
                        + logp_u + logp_v,
                        cur_ll, logq_fwd=logq_u + logq_v):
                    U, V = U2, V2
                    u_prec = np.append(u_prec, up_prec)
                    v_prec = np.append(v_prec, vp_prec)
                    k += 1
            elif k > 0:
                j = int(rng.integers(k))
                U2 = np.delete(U, j, axis=1)
                V2 = np.delete(V, j, axis=0)
                new_ll = _loglik(S, mask, U2, V2, noise_prec)
                resid2 = np.where(mask, S - U2 @ V2, 0.0)
                _, logq_v, logp_v = _propose_v(resid2, v_prec[j], rng,
                                               at=V[j])
                _, logq_u = _conditional_u(resid2, mask, V[j], u_prec[j],
                                           noise_prec, rng, at=U[:, j])
                logp_u = float(np.sum(-0.5 * u_prec[j] * U[:, j] ** 2
                                      + 0.5 * np.log(u_prec[j] / (2 * np.pi))))
                if np.log(rng.random()) < mh_log_accept(
                        new_ll - birth_log_prior_ratio(k - 1, cfg.rate)
                        - logp_u - logp_v, cur_ll,
                        logq_rev=logq_u + logq_v):
                    U, V = U2, V2
                    u_prec = np.delete(u_prec, j)
                    v_prec = np.delete(v_prec, j)
                    k -= 1
        if sweep >= cfg.burn:
            k_trace.append(k)

    residual = np.where(mask, S - U @ V, 0.0)
    return {"U": U, "V": V, "residual": residual, "k_trace": k_trace,
            "noise_prec": noise_prec}


def init_low_rank(S, mask, hyper, rng, cfg=None):
    """Fit U V ~ S; returns (U, V, residual) with the exact residual."""
    cfg = cfg or RJConfig()
    out = pmf_rjmcmc(S, mask, hyper, cfg, rng)
    return out["U"], out["V"], out["residual"]
