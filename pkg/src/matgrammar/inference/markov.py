"""Random-walk state estimation: Kalman filter, RTS smoother, FFBS draws.

Used to initialize integration-chain structures: the target matrix is
modeled as noisy observations of a Gaussian random walk down the rows, one
independent scalar chain per column (vectorized).  Gap multipliers allow
steps that span several original rows.
"""

import numpy as np


def kalman_filter(y, mask, obs_var, inc_var, gaps=None):
    """Filtered means/variances for s_t = s_{t-1} + N(0, g_t inc_var).

    y, mask: (n, d); obs_var, inc_var: scalars or (d,); gaps: (n,) step
    multipliers (gaps[0] scales the initial variance).  Missing entries
    (mask 0) are skipped.  Returns (fm, fv, pm, pv) each (n, d).
    """
    y = np.asarray(y, dtype=float)
    n, d = y.shape
    obs_var = np.broadcast_to(np.asarray(obs_var, dtype=float), (d,))
    inc_var = np.broadcast_to(np.asarray(inc_var, dtype=float), (d,))
    gaps = np.ones(n) if gaps is None else np.asarray(gaps, dtype=float)
    fm = np.zeros((n, d))
    fv = np.zeros((n, d))
    pm = np.zeros((n, d))
    pv = np.zeros((n, d))
    mean = np.zeros(d)
    var = np.zeros(d)
    for t in range(n):
        mean_p = mean
        var_p = var + gaps[t] * inc_var
        pm[t], pv[t] = mean_p, var_p
        obs = mask[t].astype(float)
        gain = obs * var_p / (var_p + obs_var)
        mean = mean_p + gain * (np.where(mask[t], y[t], 0.0) - mean_p)
        var = var_p * (1.0 - gain)
        fm[t], fv[t] = mean, var
    return fm, fv, pm, pv


def rts_smooth(y, mask, obs_var, inc_var, gaps=None):
    """Smoothed marginal means and variances of the walk states."""
    fm, fv, pm, pv = kalman_filter(y, mask, obs_var, inc_var, gaps)
    n, d = fm.shape
    sm = np.zeros((n, d))
    sv = np.zeros((n, d))
    sm[n - 1], sv[n - 1] = fm[n - 1], fv[n - 1]
    for t in range(n - 2, -1, -1):
        J = fv[t] / pv[t + 1]
        sm[t] = fm[t] + J * (sm[t + 1] - pm[t + 1])
        sv[t] = fv[t] + J * J * (sv[t + 1] - pv[t + 1])
    return sm, sv


def ffbs_sample(y, mask, obs_var, inc_var, rng, gaps=None):
    """A joint posterior draw of the walk states (backward sampling)."""
    fm, fv, pm, pv = kalman_filter(y, mask, obs_var, inc_var, gaps)
    n, d = fm.shape
    x = np.zeros((n, d))
    x[n - 1] = fm[n - 1] + rng.standard_normal(d) * np.sqrt(np.maximum(fv[n - 1], 0))
    for t in range(n - 2, -1, -1):
        J = fv[t] / pv[t + 1]
        mean = fm[t] + J * (x[t + 1] - pm[t + 1])
        var = np.maximum(fv[t] - J * J * pv[t + 1], 0.0)
        x[t] = mean + rng.standard_normal(d) * np.sqrt(var)
    return x


def init_markov(S, mask, hyper, rng, sweeps=50, gaps=None):
    """Posterior draw of random-walk states explaining S; exact residual.

    Iterates FFBS draws of the states with conjugate updates of the
    per-column increment and observation variances.  Returns (increments,
    states, residual): cumulatively summing increments gives the states.
    """
    S = np.asarray(S, dtype=float)
    n, d = S.shape
    mask = np.ones_like(S, dtype=bool) if mask is None else mask
    var0 = max(float(np.var(S[mask])), 1e-6)
    inc_var = np.full(d, var0 / 2)
    obs_var = np.full(d, var0 / 2)
    gap_arr = np.ones(n) if gaps is None else np.asarray(gaps, dtype=float)
    states = np.where(mask, S, 0.0)
    for _ in range(sweeps):
        states = ffbs_sample(S, mask, obs_var, inc_var, rng, gaps=gap_arr)
        inc = np.diff(states, axis=0, prepend=np.zeros((1, d)))
        scaled = (inc * inc) / gap_arr[:, None]
        shape = hyper.gamma_a + 0.5 * n
        rate = hyper.gamma_b + 0.5 * scaled.sum(axis=0)
        inc_var = 1.0 / rng.gamma(shape, 1.0 / rate)
        resid = np.where(mask, S - states, 0.0)
        counts = mask.sum(axis=0)
        shape = hyper.gamma_a + 0.5 * counts
        rate = hyper.gamma_b + 0.5 * (resid * resid).sum(axis=0)
        obs_var = 1.0 / rng.gamma(shape, 1.0 / rate)
    increments = np.diff(states, axis=0, prepend=np.zeros((1, d)))
    residual = np.where(mask, S - states, 0.0)
    return increments, states, residual
