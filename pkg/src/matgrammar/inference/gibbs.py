"""Generic Gibbs sampling over a fitted decomposition state.

Each sweep updates every sampled leaf from its full conditional given the
others and the observed entries, then resamples hyperparameters and the
noise precision.  Gaussian leaves get joint row/column conditionals (with a
forward-filter backward-sample pass for integration chains), multinomial
rows get discrete conditionals, Bernoulli entries get log-odds flips, and
scale fields inside exp() get univariate slice sampling.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from ..components import (
    resample_bernoulli_pi,
    resample_gaussian_precisions,
    resample_multinomial_pi,
)
from ..errors import NumericalFailure
from ..expr import evaluate


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.clip(x, -500, 500)))
from .state import ExpInteriorContext, extract_context

JITTER = 1e-8


def mh_log_accept(logp_new, logp_old, logq_fwd=0.0, logq_rev=0.0):
    """Metropolis-Hastings log acceptance probability (capped at 0)."""
    return min(0.0, logp_new - logp_old + logq_rev - logq_fwd)


def _chol_sample(post_prec, h, rng):
    """Draw from N(prec^-1 h, prec^-1), with one jittered retry."""
    for attempt in range(2):
        try:
            c, low = cho_factor(post_prec, lower=True)
            mean = cho_solve((c, low), h)
            noise = solve_triangular(c, rng.standard_normal(h.shape[0]),
                                     lower=True, trans=1)
            return mean + noise
        except np.linalg.LinAlgError:
            post_prec = post_prec + (JITTER * (10.0 ** attempt)
                                     * np.eye(post_prec.shape[0]))
    raise NumericalFailure("conditional precision not positive definite")


def _prod(pairs):
    out = None
    for _, v in pairs:
        out = v if out is None else out @ v
    return out


def slice_sample(logf, x0, rng, width=1.0, max_steps=50):
    """Univariate slice sampling with stepping out (Neal 2003)."""
    logy = logf(x0) + np.log(rng.random())
    u = rng.random()
    lo, hi = x0 - width * u, x0 + width * (1.0 - u)
    steps = max_steps
    while steps > 0 and logf(lo) > logy:
        lo -= width
        steps -= 1
    steps = max_steps
    while steps > 0 and logf(hi) > logy:
        hi += width
        steps -= 1
    for _ in range(200):
        x1 = lo + (hi - lo) * rng.random()
        if logf(x1) > logy:
            return x1
        if x1 < x0:
            lo = x1
        else:
            hi = x1
    return x0


# ---------------------------------------------------------------------------
# Gaussian leaf updates
# ---------------------------------------------------------------------------

def _design(ctx, i):
    """Per-row design D_i: choosing row value v contributes v @ D_i.

    Returns None for the identity and ('diag', s) for a diagonal design.
    """
    R1 = _prod(ctx.inner_right)
    R2 = _prod(ctx.right)
    if ctx.scale is None:
        if R1 is None and R2 is None:
            return None
        if R1 is None:
            return R2
        return R1 if R2 is None else R1 @ R2
    s = ctx.scale[i]
    if R1 is None and R2 is None:
        return ("diag", s)
    if R1 is None:
        return s[:, None] * R2
    return R1 * s[None, :] if R2 is None else R1 @ (s[:, None] * R2)


def _apply_design(D, v):
    if D is None:
        return v
    if isinstance(D, tuple):
        return D[1] * v
    return v @ D


def _gauss_rowwise(zv, ctx, T, W, rp, cp, rng):
    """Sequential row updates of zv; context must have no inner-left factor.

    Model: T = L (S o (zv R1)) R2 + E with everything but zv fixed; rows of
    zv are updated in order with the shared contribution maintained.
    """
    p, q = zv.shape
    L = _prod(ctx.left)
    shared_D = _design(ctx, 0) if ctx.scale is None else None
    out = zv.copy()

    def contrib_row(i, v):
        D = shared_D if ctx.scale is None else _design(ctx, i)
        return _apply_design(D, v)

    if L is not None:
        block = (np.stack([contrib_row(i, out[i]) for i in range(p)])
                 if p else np.zeros((0, T.shape[1])))
        M_cur = L @ block

    for i in range(p):
        D = shared_D if ctx.scale is None else _design(ctx, i)
        if L is None:
            u = W[i] * T[i]
            omega = W[i]
        else:
            l = L[:, i]
            contrib = np.outer(l, contrib_row(i, out[i]))
            resid = T - (M_cur - contrib)
            omega = (l * l) @ W
            u = (W * resid).T @ l
        prior = rp[i] * cp
        if D is None:
            post_prec = omega + prior
            new_row = u / post_prec + rng.standard_normal(q) / np.sqrt(post_prec)
        elif isinstance(D, tuple):
            s = D[1]
            post_prec = omega * s * s + prior
            new_row = (s * u) / post_prec + rng.standard_normal(q) / np.sqrt(post_prec)
        else:
            prec = (D * omega) @ D.T + np.diag(prior)
            h = D @ u
            new_row = _chol_sample(prec, h, rng)
        if L is not None:
            M_cur = M_cur + np.outer(L[:, i],
                                     contrib_row(i, new_row) - contrib_row(i, out[i]))
        out[i] = new_row
    return out


def _gauss_entrywise(zv, ctx, T, W, rp, cp, rng):
    """Contribution is S o zv (or zv itself); entries fully independent."""
    S = ctx.scale if ctx.scale is not None else np.ones_like(T)
    prior = np.outer(rp, cp)
    post_prec = W * S * S + prior
    mean = (W * S * T) / post_prec
    return mean + rng.standard_normal(T.shape) / np.sqrt(post_prec)


def _gauss_chain_ffbs(zv, ctx, T, W, rp, cp, rng):
    """Forward filter backward sample for T = C zv R + E (order-1 chain)."""
    n, q = zv.shape
    R = _prod(ctx.right)
    qvar = 1.0 / np.outer(rp, cp)
    if R is None:
        d = T.shape[1]
        fm = np.zeros((n, d))
        fv = np.zeros((n, d))
        pred_mean = np.zeros(d)
        pred_var = np.zeros(d)
        for t in range(n):
            pv = pred_var + qvar[t]
            post_prec = 1.0 / pv + W[t]
            v = 1.0 / post_prec
            m = v * (pred_mean / pv + W[t] * T[t])
            fm[t], fv[t] = m, v
            pred_mean, pred_var = m, v
        x = np.zeros((n, d))
        x[n - 1] = fm[n - 1] + rng.standard_normal(d) * np.sqrt(fv[n - 1])
        for t in range(n - 2, -1, -1):
            qv = qvar[t + 1]
            prec = 1.0 / fv[t] + 1.0 / qv
            v = 1.0 / prec
            m = v * (fm[t] / fv[t] + x[t + 1] / qv)
            x[t] = m + rng.standard_normal(d) * np.sqrt(v)
    else:
        eye = np.eye(q)
        fm = np.zeros((n, q))
        fP = np.zeros((n, q, q))
        pred_mean = np.zeros(q)
        pred_cov = np.zeros((q, q))
        for t in range(n):
            pc = pred_cov + np.diag(qvar[t])
            prec_prior = np.linalg.inv(pc + JITTER * eye)
            prec_post = prec_prior + (R * W[t]) @ R.T
            cov = np.linalg.inv(prec_post)
            mean = cov @ (prec_prior @ pred_mean + R @ (W[t] * T[t]))
            fm[t], fP[t] = mean, cov
            pred_mean, pred_cov = mean, cov
        x = np.zeros((n, q))
        x[n - 1] = rng.multivariate_normal(fm[n - 1], fP[n - 1] + JITTER * eye,
                                           method="cholesky")
        for t in range(n - 2, -1, -1):
            qprec = np.diag(1.0 / qvar[t + 1])
            fprec = np.linalg.inv(fP[t] + JITTER * eye)
            cov = np.linalg.inv(fprec + qprec)
            mean = cov @ (fprec @ fm[t] + qprec @ x[t + 1])
            x[t] = rng.multivariate_normal(mean, cov + JITTER * eye,
                                           method="cholesky")
    out = np.empty_like(x)
    out[0] = x[0]
    out[1:] = np.diff(x, axis=0)
    return out


def _gauss_generic(state, leaf_id, X, W, rp, cp, rng):
    """Exact row conditionals via basis evaluation of the linear map."""
    comp = state.binding[leaf_id]
    Z = comp.value
    p, q = Z.shape
    zero = state.signal(override_leaf=leaf_id, override_value=np.zeros_like(Z))
    out = Z.copy()
    w = W.ravel()
    for i in range(p):
        others = out.copy()
        others[i] = 0.0
        resid = X - state.signal(override_leaf=leaf_id, override_value=others)
        basis = np.empty((q, X.size))
        for s in range(q):
            e = np.zeros_like(Z)
            e[i, s] = 1.0
            basis[s] = (state.signal(override_leaf=leaf_id, override_value=e)
                        - zero).ravel()
        prec = (basis * w) @ basis.T + np.diag(rp[i] * cp)
        h = basis @ (w * resid.ravel())
        out[i] = _chol_sample(prec, h, rng)
    return out


def _orient(ctx, comp, T, W):
    """Bring the problem to 'leaf enters untransposed' orientation."""
    if ctx.transposed:
        return ctx.flip(), T.T, W.T
    return ctx, T, W


def _update_gaussian_leaf(state, leaf, ctx, X, W, mask, rng):
    comp = state.binding[leaf.id]
    rp = comp.row_prec_vector().astype(float)
    cp = comp.col_prec_vector().astype(float)
    if ctx.generic:
        comp.value = _gauss_generic(state, leaf.id, X, W, rp, cp, rng)
        return
    T = X - state.signal(override_leaf=leaf.id,
                         override_value=np.zeros_like(comp.value))
    T = np.where(mask, T, 0.0)
    wctx, T, W = _orient(ctx, comp, T, W)

    p, q = comp.shape
    if not wctx.left and not wctx.right and not wctx.inner_left \
            and not wctx.inner_right:
        comp.value = _gauss_entrywise(comp.value, wctx, T, W, rp, cp, rng)
        return
    if wctx.chain_order() == 1:
        comp.value = _gauss_chain_ffbs(comp.value, wctx, T, W, rp, cp, rng)
        return
    cctx = wctx.flip()
    if cctx.chain_order() == 1:
        comp.value = _gauss_chain_ffbs(comp.value.T, cctx, T.T, W.T,
                                       cp, rp, rng).T
        return
    row_ok = not wctx.inner_left
    col_ok = not cctx.inner_left
    if row_ok and (q <= p or not col_ok):
        comp.value = _gauss_rowwise(comp.value, wctx, T, W, rp, cp, rng)
    elif col_ok:
        comp.value = _gauss_rowwise(comp.value.T, cctx, T.T, W.T,
                                    cp, rp, rng).T
    else:
        comp.value = _gauss_generic(state, leaf.id, X, W, rp, cp, rng)


# ---------------------------------------------------------------------------
# discrete leaf updates
# ---------------------------------------------------------------------------

def _row_stats(ctx, L, out, i, T, W, contrib_row):
    """Weighted linear/quadratic statistics for row i of a discrete leaf."""
    if L is None:
        return W[i] * T[i], W[i], None
    l = L[:, i]
    omega = (l * l) @ W
    return None, omega, l


def _update_multinomial_leaf(state, leaf, ctx, X, W, mask, rng):
    comp = state.binding[leaf.id]
    if ctx.generic or ctx.inner_left:
        _update_discrete_generic(state, leaf, X, W, mask, rng, kind="M")
        return
    T = X - state.signal(override_leaf=leaf.id,
                         override_value=np.zeros_like(comp.value))
    T = np.where(mask, T, 0.0)
    wctx, T, W = _orient(ctx, comp, T, W)
    if wctx.inner_left:
        _update_discrete_generic(state, leaf, X, mask * state.noise_precision,
                                 mask, rng, kind="M")
        return
    Z = comp.value
    p, k = Z.shape
    log_pi = np.log(np.maximum(comp.params["pi"], 1e-300))
    L = _prod(wctx.left)
    shared_D = _design(wctx, 0) if wctx.scale is None else None

    def options(i):
        D = shared_D if wctx.scale is None else _design(wctx, i)
        if D is None:
            return np.eye(k)
        if isinstance(D, tuple):
            return np.diag(D[1])
        return D

    if L is not None:
        M_cur = L @ np.stack([Z[i] @ options(i) for i in range(p)])
    for i in range(p):
        O = options(i)
        if L is None:
            u = W[i] * T[i]
            omega = W[i]
        else:
            l = L[:, i]
            contrib = np.outer(l, Z[i] @ O)
            resid = T - (M_cur - contrib)
            omega = (l * l) @ W
            u = (W * resid).T @ l
        lin = O @ u
        quad = np.einsum("cj,j,cj->c", O, omega, O)
        ll = log_pi + lin - 0.5 * quad
        probs = np.exp(ll - ll.max())
        probs /= probs.sum()
        c = int(rng.choice(k, p=probs))
        new_row = np.zeros(k)
        new_row[c] = 1.0
        if L is not None:
            M_cur = M_cur + np.outer(L[:, i], (new_row - Z[i]) @ O)
        Z[i] = new_row


def _update_bernoulli_leaf(state, leaf, ctx, X, W, mask, rng):
    comp = state.binding[leaf.id]
    if ctx.generic or ctx.inner_left:
        _update_discrete_generic(state, leaf, X, W, mask, rng, kind="B")
        return
    T = X - state.signal(override_leaf=leaf.id,
                         override_value=np.zeros_like(comp.value))
    T = np.where(mask, T, 0.0)
    wctx, T, W = _orient(ctx, comp, T, W)
    if wctx.inner_left:
        _update_discrete_generic(state, leaf, X, mask * state.noise_precision,
                                 mask, rng, kind="B")
        return
    Z = comp.value
    p, k = Z.shape
    pi = np.clip(comp.params["pi"], 1e-12, 1 - 1e-12)
    prior_odds = np.log(pi) - np.log1p(-pi)
    L = _prod(wctx.left)
    shared_D = _design(wctx, 0) if wctx.scale is None else None

    def options(i):
        D = shared_D if wctx.scale is None else _design(wctx, i)
        if D is None:
            return np.eye(k)
        if isinstance(D, tuple):
            return np.diag(D[1])
        return D

    for i in range(p):
        O = options(i)
        if L is None:
            u = W[i] * T[i]
            omega = W[i]
        else:
            l = L[:, i]
            others = Z.copy()
            others[i] = 0.0
            resid = T - L @ np.stack([others[r] @ options(r) for r in range(p)])
            omega = (l * l) @ W
            u = (W * resid).T @ l
        m = Z[i] @ O
        for s in range(k):
            o = O[s]
            m_off = m - Z[i, s] * o
            gain = np.dot(o, u - omega * m_off) - 0.5 * np.dot(o, omega * o)
            logit = prior_odds[s] + gain
            b = 1.0 if rng.random() < 1.0 / (1.0 + np.exp(-logit)) else 0.0
            m = m_off + b * o
            Z[i, s] = b


def _update_discrete_generic(state, leaf, X, W, mask, rng, kind):
    """Exact but slow conditionals through full signal recomputation."""
    comp = state.binding[leaf.id]
    Z = comp.value
    p, k = Z.shape

    def loglik():
        resid = np.where(mask, X - state.signal(), 0.0)
        return -0.5 * np.sum(W * resid * resid)

    if kind == "M":
        log_pi = np.log(np.maximum(comp.params["pi"], 1e-300))
        for i in range(p):
            lls = np.empty(k)
            for c in range(k):
                Z[i] = 0.0
                Z[i, c] = 1.0
                lls[c] = loglik() + log_pi[c]
            probs = np.exp(lls - lls.max())
            probs /= probs.sum()
            c = int(rng.choice(k, p=probs))
            Z[i] = 0.0
            Z[i, c] = 1.0
    else:
        pi = np.clip(comp.params["pi"], 1e-12, 1 - 1e-12)
        for i in range(p):
            for s in range(k):
                lls = np.empty(2)
                for b in (0.0, 1.0):
                    Z[i, s] = b
                    lls[int(b)] = loglik()
                logit = (np.log(pi[s]) - np.log1p(-pi[s])) + lls[1] - lls[0]
                Z[i, s] = 1.0 if rng.random() < _sigmoid(logit) else 0.0


# ---------------------------------------------------------------------------
# scale fields inside exp()
# ---------------------------------------------------------------------------

def _update_exp_interior(state, leaf, ctx, X, W, rng):
    comp = state.binding[leaf.id]
    Z = comp.value
    rp = comp.row_prec_vector()
    cp = comp.col_prec_vector()

    slow = (ctx.generic or ctx.outer_left or ctx.transposed
            or ctx.arg_ctx.transposed or ctx.arg_ctx.inner_left
            or ctx.arg_ctx.inner_right or ctx.arg_ctx.scale is not None)
    if slow:
        def make_logf(i, s):
            def logf(z):
                old = Z[i, s]
                Z[i, s] = z
                resid = X - state.signal()
                Z[i, s] = old
                return (-0.5 * np.sum(W * resid * resid)
                        - 0.5 * rp[i] * cp[s] * z * z)
            return logf
        for i in range(Z.shape[0]):
            for s in range(Z.shape[1]):
                Z[i, s] = slice_sample(make_logf(i, s), Z[i, s], rng)
        return

    vals = state.values()
    arg_left = _prod(ctx.arg_ctx.left)
    arg_right = _prod(ctx.arg_ctx.right)
    Wmat = evaluate(ctx.elemprod.right, vals)
    R2 = _prod(ctx.outer_right)
    resid = np.where(W > 0, X - state.signal(), 0.0)
    arg = evaluate(ctx.elemprod.left.arg, vals)

    if arg_left is None and arg_right is None:
        # entry (i, s) scales signal entries along R2[s] (or just entry s):
        # the likelihood is quadratic in exp(z), so evaluations are O(1)
        for i in range(Z.shape[0]):
            for s in range(Z.shape[1]):
                z_old = Z[i, s]
                e_old = np.exp(arg[i, s])
                if R2 is None:
                    c_res = W[i, s] * resid[i, s] * Wmat[i, s]
                    c_quad = 0.5 * W[i, s] * Wmat[i, s] ** 2
                else:
                    c = Wmat[i, s] * R2[s]
                    wr = W[i] * resid[i]
                    c_res = float(wr @ c)
                    c_quad = 0.5 * float((W[i] * c) @ c)
                lam = rp[i] * cp[s]

                def logf(z):
                    delta = np.exp(z) - e_old
                    return delta * c_res - delta * delta * c_quad \
                        - 0.5 * lam * z * z

                z_new = slice_sample(logf, z_old, rng)
                delta = np.exp(z_new) - e_old
                if R2 is None:
                    resid[i, s] -= delta * Wmat[i, s]
                else:
                    resid[i] -= delta * Wmat[i, s] * R2[s]
                arg[i, s] = z_new
                Z[i, s] = z_new
    elif arg_left is None:
        dirs = arg_right
        for i in range(Z.shape[0]):
            for s in range(Z.shape[1]):
                direction = dirs[s]
                a_row = arg[i].copy()
                old_blk = np.exp(a_row) * Wmat[i]
                old_sig = old_blk if R2 is None else old_blk @ R2
                z_old = Z[i, s]

                def logf(z):
                    blk = np.exp(a_row + (z - z_old) * direction) * Wmat[i]
                    sig = blk if R2 is None else blk @ R2
                    r = resid[i] + old_sig - sig
                    return (-0.5 * np.dot(W[i], r * r)
                            - 0.5 * rp[i] * cp[s] * z * z)

                z_new = slice_sample(logf, z_old, rng)
                arg[i] = a_row + (z_new - z_old) * direction
                new_blk = np.exp(arg[i]) * Wmat[i]
                new_sig = new_blk if R2 is None else new_blk @ R2
                resid[i] += old_sig - new_sig
                Z[i, s] = z_new
    else:
        for s in range(Z.shape[0]):
            col_dir = arg_left[:, s]
            for j in range(Z.shape[1]):
                a_col = arg[:, j].copy()
                old_col = np.exp(a_col) * Wmat[:, j]
                z_old = Z[s, j]

                def logf(z):
                    new_col = np.exp(a_col + (z - z_old) * col_dir) * Wmat[:, j]
                    if R2 is None:
                        r = resid[:, j] + old_col - new_col
                        return (-0.5 * np.dot(W[:, j], r * r)
                                - 0.5 * rp[s] * cp[j] * z * z)
                    dsig = np.outer(new_col - old_col, R2[j])
                    r = resid - dsig
                    return (-0.5 * np.sum(W * r * r)
                            - 0.5 * rp[s] * cp[j] * z * z)

                z_new = slice_sample(logf, z_old, rng)
                arg[:, j] = a_col + (z_new - z_old) * col_dir
                new_col = np.exp(arg[:, j]) * Wmat[:, j]
                if R2 is None:
                    resid[:, j] += old_col - new_col
                else:
                    resid -= np.outer(new_col - old_col, R2[j])
                Z[s, j] = z_new


# ---------------------------------------------------------------------------
# hyperparameters and the sweep
# ---------------------------------------------------------------------------

def resample_noise(state, X, mask, rng):
    """Set the noise leaf to the residual and update its tied precisions."""
    if state.noise_id is None:
        return
    comp = state.binding[state.noise_id]
    resid = np.where(mask, X - state.signal(), 0.0)
    comp.value = resid
    hyper = state.hyper
    n_obs = float(mask.sum())
    ss = float(np.sum(resid * resid))
    cp = float(np.asarray(comp.params["col_prec"]).ravel()[0])
    rate = hyper.gamma_b + 0.5 * cp * ss
    comp.params["row_prec"] = float(rng.gamma(hyper.gamma_a + 0.5 * n_obs, 1.0 / rate))
    rp = comp.params["row_prec"]
    rate = hyper.gamma_b + 0.5 * rp * ss
    comp.params["col_prec"] = float(rng.gamma(hyper.gamma_a + 0.5 * n_obs, 1.0 / rate))


def gibbs_sweep(state, X, mask, rng):
    """One systematic-scan sweep over all leaves and hyperparameters."""
    X = np.where(mask, X, 0.0)
    for leaf in state.sampled_leaves():
        comp = state.binding[leaf.id]
        if 0 in comp.shape:
            continue
        W = mask * state.noise_precision
        ctx = extract_context(state, leaf.id)
        if ctx is None:
            continue
        if isinstance(ctx, ExpInteriorContext):
            _update_exp_interior(state, leaf, ctx, X, W, rng)
        elif leaf.kind == "G":
            _update_gaussian_leaf(state, leaf, ctx, X, W, mask, rng)
        elif leaf.kind == "M":
            _update_multinomial_leaf(state, leaf, ctx, X, W, mask, rng)
        elif leaf.kind == "B":
            _update_bernoulli_leaf(state, leaf, ctx, X, W, mask, rng)
    for leaf in state.sampled_leaves():
        comp = state.binding[leaf.id]
        if 0 in comp.shape:
            continue
        if comp.kind == "G":
            resample_gaussian_precisions(comp, state.hyper, rng)
        elif comp.kind == "M":
            resample_multinomial_pi(comp, state.hyper, rng)
        elif comp.kind == "B":
            resample_bernoulli_pi(comp, state.hyper, rng)
    resample_noise(state, X, mask, rng)
    return state


def sample_data(state, rng):
    """Draw a data matrix from the model given the current latents."""
    sig = state.signal()
    X = sig + rng.standard_normal(sig.shape) * np.sqrt(state.noise_var())
    if state.noise_id is not None:
        state.binding[state.noise_id].value = X - sig
    return X
