"""Held-out predictive likelihood scoring.

For each held-out row x the estimator computes a stochastic lower bound on
log p(x | X_O): Gaussian row latents (including chain extensions) are
marginalized exactly, discrete latents are either enumerated exactly or
bounded with an independent variational family, and Gaussian-scale-mixture
latents are Gaussianized and then corrected by annealed importance sampling
on the scale variables.  Columns are scored on the transposed model.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .ais import AISConfig, ais_log_weight, logmeanexp
from .components import integration_matrix
from .errors import NumericalFailure, TooSmall
from .expr import ElemProd, Leaf, Sum, Product, Transpose, ExpOf, evaluate
from .grammar import GSM, MARKOV, PLAIN, expand_allow_noise_free
from .inference.gibbs import gibbs_sweep, slice_sample
from .inference.initialize import initialize_structure
from .inference.state import NOISE_FLOOR_VAR, transpose_state
from .rng import derive_rng

VAR_FLOOR = 1e-10


@dataclass
class HoldoutPartition:
    n: int
    d: int
    held_rows: np.ndarray
    held_cols: np.ndarray
    seed: int

    @property
    def observed_rows(self):
        return np.setdiff1d(np.arange(self.n), self.held_rows)

    @property
    def observed_cols(self):
        return np.setdiff1d(np.arange(self.d), self.held_cols)

    def transposed(self):
        return HoldoutPartition(n=self.d, d=self.n,
                                held_rows=self.held_cols.copy(),
                                held_cols=self.held_rows.copy(),
                                seed=self.seed)


def make_holdout(X, n_rows_held, n_cols_held, seed):
    """Uniform random disjoint held-out rows and columns."""
    n, d = np.asarray(X).shape
    if n - n_rows_held < 2 or d - n_cols_held < 2:
        raise TooSmall("observed block smaller than 2x2")
    rng = derive_rng(seed, "holdout")
    held_rows = np.sort(rng.choice(n, size=int(n_rows_held), replace=False))
    held_cols = np.sort(rng.choice(d, size=int(n_cols_held), replace=False))
    return HoldoutPartition(n=n, d=d, held_rows=held_rows,
                            held_cols=held_cols, seed=seed)


def holdout_from_fractions(X, frac_rows, frac_cols, seed):
    n, d = np.asarray(X).shape
    nr = max(1, int(round(frac_rows * n))) if frac_rows > 0 else 0
    nc = max(1, int(round(frac_cols * d))) if frac_cols > 0 else 0
    return make_holdout(X, nr, nc, seed)


@dataclass
class PredictiveScore:
    structure: str
    total: float
    row_scores: np.ndarray
    col_scores: np.ndarray
    n_samples: int
    ais_log_weights: list = field(default_factory=list)

    @classmethod
    def combine(cls, structure, row_scores, col_scores, n_samples, ais_logs):
        total = float(np.sum(row_scores) + np.sum(col_scores))
        return cls(structure=structure, total=total,
                   row_scores=np.asarray(row_scores),
                   col_scores=np.asarray(col_scores),
                   n_samples=n_samples, ais_log_weights=ais_logs)


# ---------------------------------------------------------------------------
# posterior samples
# ---------------------------------------------------------------------------

def posterior_samples(X_O, mask_O, expr, derivation, cfg, rng, cache=None):
    """Fitted states on the observed block: initialization then Gibbs."""
    state = initialize_structure(X_O, expr, derivation, cfg.hyper, cfg, rng,
                                 mask=mask_O, cache=cache)
    sweeps = cfg.gibbs_sweeps
    n_samples = min(cfg.n_samples, sweeps)
    burn = sweeps // 2
    keep_at = set(np.unique(np.linspace(burn, sweeps - 1, n_samples)
                            .astype(int)))
    out = []
    for sweep in range(sweeps):
        gibbs_sweep(state, X_O, mask_O, rng)
        if sweep in keep_at:
            out.append(state.copy())
    if not out:
        out = [state.copy()]
    return out


# ---------------------------------------------------------------------------
# per-state row predictor
# ---------------------------------------------------------------------------

def _row_summary(state, node):
    """Diagonal Gaussian summary (mean, var) of a new row of a sub-model."""
    binding = state.binding

    def empirical(value):
        mu = value.mean(axis=0)
        var = np.maximum(value.var(axis=0), VAR_FLOOR)
        return mu, var

    def walk(e):
        if isinstance(e, Leaf):
            comp = binding[e.id]
            if e.kind == "G":
                rp = float(np.mean(comp.row_prec_vector()))
                var = 1.0 / (rp * comp.col_prec_vector())
                return np.zeros(comp.shape[1]), var
            if e.kind == "M":
                pi = comp.params["pi"]
                return pi.copy(), np.maximum(pi * (1 - pi), VAR_FLOOR)
            if e.kind == "B":
                pi = comp.params["pi"]
                return pi.copy(), np.maximum(pi * (1 - pi), VAR_FLOOR)
            return empirical(comp.value)
        if isinstance(e, Sum):
            mus, vars_ = zip(*[walk(t) for t in e.terms])
            return sum(mus), sum(vars_)
        if isinstance(e, Product):
            head = e.factors[0]
            rest = e.factors[1:]
            if isinstance(head, Leaf) and head.kind in ("G", "M", "B"):
                mu1, var1 = walk(head)
                R = evaluate(rest[0] if len(rest) == 1 else Product(rest),
                             state.values())
                mu = mu1 @ R
                var = var1 @ (R * R)
                return mu, np.maximum(var, VAR_FLOOR)
            return empirical(evaluate(e, state.values()))
        if isinstance(e, ElemProd) and isinstance(e.left, ExpOf):
            mu_z, var_z = walk(e.left.arg)
            mu_w, var_w = walk(e.right)
            ez = np.exp(mu_z + 0.5 * var_z)
            e2z = np.exp(2 * mu_z + 2 * var_z)
            mu = ez * mu_w
            var = e2z * (var_w + mu_w * mu_w) - mu * mu
            return mu, np.maximum(var, VAR_FLOOR)
        return empirical(evaluate(e, state.values()))

    return walk(node)


class RowPredictor:
    """Precomputed predictive machinery for held-out rows against one state.

    obs_positions are the original row indices of the observed block (used
    to extend integration chains across the holdout gaps).
    """

    def __init__(self, state, obs_positions, total_rows, cfg):
        self.state = state
        self.cfg = cfg
        self.noise_var = state.noise_var()
        self.d = state.d
        vals = state.values()
        sop = expand_allow_noise_free(state.expr)
        self.gauss = []      # (V or None, var-vector, fixed mean-vector)
        self.chains = []     # dicts with conditioning info
        self.discrete = []   # (kind, pi, V)
        self.gsm = []        # dicts with z/w summaries and V
        for term in sop.terms:
            V = None
            if term.v_factors:
                V = evaluate(term.v_factors[0] if len(term.v_factors) == 1
                             else Product(term.v_factors), vals)
            if term.row_class == PLAIN:
                head = term.u_factors[0]
                if isinstance(head, Leaf) and head.kind == "G":
                    comp = state.binding[head.id]
                    rp = float(np.mean(comp.row_prec_vector()))
                    var = 1.0 / (rp * comp.col_prec_vector())
                    self.gauss.append((V, var, None))
                elif isinstance(head, Leaf) and head.kind in ("M", "B"):
                    comp = state.binding[head.id]
                    self.discrete.append((head.kind, comp.params["pi"].copy(), V))
                else:
                    u_val = evaluate(head, vals)
                    mu = u_val.mean(axis=0)
                    var = np.maximum(u_val.var(axis=0), VAR_FLOOR)
                    self.gauss.append((V, var, mu))
            elif term.row_class == MARKOV:
                self.chains.append(self._prepare_chain(term, vals,
                                                       obs_positions,
                                                       total_rows, V))
            elif term.row_class == GSM:
                ep = term.u_factors[0]
                mu_z, var_z = _row_summary(state, ep.left.arg)
                mu_w, var_w = _row_summary(state, ep.right)
                self.gsm.append({"mu_z": mu_z, "var_z": var_z,
                                 "mu_w": mu_w, "var_w": var_w, "V": V})

    def _prepare_chain(self, term, vals, obs_positions, total_rows, V):
        """Gaussian conditioning of a chain term on its realized rows."""
        order = len(term.u_factors) - 1 if len(term.u_factors) > 1 else 1
        inner = term.u_factors[-1]
        u_val = evaluate(term.u_factors[0] if len(term.u_factors) == 1
                         else Product(term.u_factors), vals)
        if isinstance(inner, Leaf) and inner.kind == "G":
            comp = self.state.binding[inner.id]
            rp = float(np.mean(comp.row_prec_vector()))
            inc_var = 1.0 / (rp * comp.col_prec_vector())
        else:
            inc = np.diff(evaluate(inner, vals), axis=0,
                          prepend=np.zeros((1, u_val.shape[1])))
            inc_var = np.maximum(inc.var(axis=0), VAR_FLOOR)
        C = integration_matrix(total_rows)
        Cm = np.linalg.matrix_power(C, order)
        K = Cm @ Cm.T                     # unit-increment-variance kernel
        obs = np.asarray(obs_positions)
        K_oo = K[np.ix_(obs, obs)] + 1e-9 * np.eye(obs.size)
        chol = cho_factor(K_oo, lower=True)
        return {"kernel": K, "obs": obs, "chol": chol, "U_O": u_val,
                "inc_var": inc_var, "V": V}

    def chain_moments(self, chain, position):
        """Predictive mean/variance of the chain latent at an original row."""
        k_to = chain["kernel"][chain["obs"], position]
        w = cho_solve(chain["chol"], k_to)
        mean = w @ chain["U_O"]
        kv = chain["kernel"][position, position] - float(k_to @ w)
        var = np.maximum(kv, 0.0) * chain["inc_var"] + VAR_FLOOR
        return mean, var

    # -- Gaussian base ------------------------------------------------------

    def base_gaussian(self, cols, position):
        """Mean and covariance of x (restricted to cols) with Gaussian and
        chain latents marginalized, discrete/GSM latents left out."""
        dsub = cols.size
        m = np.zeros(dsub)
        C = np.eye(dsub) * self.noise_var
        for V, var, mu in self.gauss:
            Vs = V[:, cols] if V is not None else None
            if Vs is None:
                C[np.diag_indices(dsub)] += var[cols]
                if mu is not None:
                    m += mu[cols]
            else:
                C += Vs.T @ (var[:, None] * Vs)
                if mu is not None:
                    m += mu @ Vs
        for chain in self.chains:
            mu_c, var_c = self.chain_moments(chain, position)
            Vs = chain["V"][:, cols] if chain["V"] is not None else None
            if Vs is None:
                C[np.diag_indices(dsub)] += var_c[cols]
                m += mu_c[cols]
            else:
                C += Vs.T @ (var_c[:, None] * Vs)
                m += mu_c @ Vs
        return m, C

    def gsm_gaussianized(self, cols):
        """Covariance (and mean) contribution of Gaussianized GSM terms."""
        dsub = cols.size
        m = np.zeros(dsub)
        C = np.zeros((dsub, dsub))
        for g in self.gsm:
            ez = np.exp(g["mu_z"] + 0.5 * g["var_z"])
            e2z = np.exp(2 * g["mu_z"] + 2 * g["var_z"])
            mu_u = ez * g["mu_w"]
            var_u = e2z * (g["var_w"] + g["mu_w"] ** 2) - mu_u ** 2
            var_u = np.maximum(var_u, VAR_FLOOR)
            Vs = g["V"][:, cols] if g["V"] is not None else None
            if Vs is None:
                C[np.diag_indices(dsub)] += var_u[cols]
                m += mu_u[cols]
            else:
                C += Vs.T @ (var_u[:, None] * Vs)
                m += mu_u @ Vs
        return m, C


# ---------------------------------------------------------------------------
# discrete marginalization
# ---------------------------------------------------------------------------

def _discrete_blocks(predictor, cols):
    """Stacked option machinery: rows of A are latent coordinates."""
    blocks = []
    A_rows = []
    for kind, pi, V in predictor.discrete:
        Vs = V[:, cols] if V is not None else np.eye(predictor.d)[:, cols]
        k = pi.size
        start = len(A_rows)
        A_rows.extend(list(Vs))
        blocks.append({"kind": kind, "pi": pi, "slice": (start, start + k)})
    A = np.array(A_rows) if A_rows else np.zeros((0, cols.size))
    return blocks, A


def _enumerate_configs(blocks):
    """Iterate all discrete configurations as (logprior, flat u vector)."""
    per_block = []
    for b in blocks:
        k = b["slice"][1] - b["slice"][0]
        if b["kind"] == "M":
            opts = []
            pi = np.maximum(b["pi"], 1e-300)
            for c in range(k):
                u = np.zeros(k)
                u[c] = 1.0
                opts.append((np.log(pi[c]), u))
        else:
            pi = np.clip(b["pi"], 1e-12, 1 - 1e-12)
            opts = []
            for bits in itertools.product((0.0, 1.0), repeat=k):
                u = np.array(bits)
                lp = float(np.sum(u * np.log(pi) + (1 - u) * np.log1p(-pi)))
                opts.append((lp, u))
        per_block.append(opts)
    for combo in itertools.product(*per_block):
        lp = sum(c[0] for c in combo)
        u = np.concatenate([c[1] for c in combo]) if combo else np.zeros(0)
        yield lp, u


def _n_configs(blocks):
    n = 1
    for b in blocks:
        k = b["slice"][1] - b["slice"][0]
        n *= k if b["kind"] == "M" else 2 ** k
        if n > 10 ** 9:
            break
    return n


def _gauss_logpdf_chol(r, chol_l):
    half = solve_triangular(chol_l, r, lower=True)
    return (-0.5 * float(half @ half)
            - 0.5 * r.size * np.log(2 * np.pi)
            - float(np.sum(np.log(np.diag(chol_l)))))


def discrete_marginal_loglik(x, m0, C, blocks, A, exact_limit, vb_iters):
    """log p(x) with discrete latents summed out (exact or VB bound)."""
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(C + 1e-8 * np.eye(C.shape[0]))
    r = x - m0
    if not blocks:
        return _gauss_logpdf_chol(r, L)
    rhat = solve_triangular(L, r, lower=True)
    Ahat = solve_triangular(L, A.T, lower=True).T
    h = Ahat @ rhat
    Q = Ahat @ Ahat.T
    c0 = float(rhat @ rhat)
    logdet_term = (-0.5 * x.size * np.log(2 * np.pi)
                   - float(np.sum(np.log(np.diag(L)))))
    if _n_configs(blocks) <= exact_limit:
        vals = [lp - 0.5 * (c0 - 2 * float(h @ u) + float(u @ Q @ u))
                for lp, u in _enumerate_configs(blocks)]
        m = max(vals)
        return logdet_term + m + np.log(np.sum(np.exp(np.array(vals) - m)))
    return logdet_term + _vb_bound(c0, h, Q, blocks, vb_iters)


def _vb_bound(c0, h, Q, blocks, iters):
    """Mean-field lower bound on log sum over discrete configurations."""
    p = h.size
    mean = np.zeros(p)
    probs = []
    for b in blocks:
        s0, s1 = b["slice"]
        k = s1 - s0
        if b["kind"] == "M":
            q = np.full(k, 1.0 / k)
        else:
            q = np.clip(b["pi"].astype(float).copy(), 0.05, 0.95)
        probs.append(q)
        mean[s0:s1] = q if b["kind"] != "M" else q
    for _ in range(iters):
        for bi, b in enumerate(blocks):
            s0, s1 = b["slice"]
            if b["kind"] == "M":
                theta = h[s0:s1] - Q[s0:s1] @ mean + Q[s0:s1, s0:s1] @ mean[s0:s1]
                logits = np.log(np.maximum(b["pi"], 1e-300)) + theta \
                    - 0.5 * np.diag(Q[s0:s1, s0:s1])
                logits -= logits.max()
                q = np.exp(logits)
                q /= q.sum()
                probs[bi] = q
                mean[s0:s1] = q
            else:
                pi = np.clip(b["pi"], 1e-12, 1 - 1e-12)
                for s in range(s1 - s0):
                    idx = s0 + s
                    th = h[idx] - (Q[idx] @ mean - Q[idx, idx] * mean[idx])
                    logit = (np.log(pi[s]) - np.log1p(-pi[s]) + th
                             - 0.5 * Q[idx, idx])
                    q = 1.0 / (1.0 + np.exp(-logit))
                    probs[bi][s] = q
                    mean[idx] = q
    # ELBO terms
    equad = float(mean @ Q @ mean)
    eprior = 0.0
    entropy = 0.0
    for bi, b in enumerate(blocks):
        s0, s1 = b["slice"]
        q = probs[bi]
        Qbb = Q[s0:s1, s0:s1]
        if b["kind"] == "M":
            cov = np.diag(q) - np.outer(q, q)
            equad += float(np.sum(Qbb * cov))
            eprior += float(q @ np.log(np.maximum(b["pi"], 1e-300)))
            entropy += float(-np.sum(q * np.log(np.maximum(q, 1e-300))))
        else:
            pi = np.clip(b["pi"], 1e-12, 1 - 1e-12)
            var = q * (1 - q)
            equad += float(np.diag(Qbb) @ var)
            eprior += float(q @ np.log(pi) + (1 - q) @ np.log1p(-pi))
            ent = -(q * np.log(np.maximum(q, 1e-300))
                    + (1 - q) * np.log(np.maximum(1 - q, 1e-300)))
            entropy += float(ent.sum())
    elik = -0.5 * (c0 - 2 * float(h @ mean) + equad)
    return elik + eprior + entropy


# ---------------------------------------------------------------------------
# the row estimator
# ---------------------------------------------------------------------------

def predictive_row_loglik(x, predictor, position, cols, ais_cfg, rng,
                          cfg=None, collect_ais=None):
    """Stochastic lower bound on log p(x | fitted state) for one held row.

    x is restricted to the observed-column footprint (cols indexes the
    state's columns); position is the row's index in the original matrix.
    """
    exact_limit = cfg.exact_enum_limit if cfg else 1024
    vb_iters = cfg.vb_iters if cfg else 30
    m0, C0 = predictor.base_gaussian(cols, position)
    blocks, A = _discrete_blocks(predictor, cols)

    if not predictor.gsm:
        out = discrete_marginal_loglik(x, m0, C0, blocks, A,
                                       exact_limit, vb_iters)
        if not np.isfinite(out):
            raise NumericalFailure("non-finite predictive bound")
        return float(out)

    # Gaussianized reference value
    mg, Cg = predictor.gsm_gaussianized(cols)
    log_ref = discrete_marginal_loglik(x, m0 + mg, C0 + Cg, blocks, A,
                                       exact_limit, vb_iters)

    # AIS correction over the concatenated scale rows
    gsm = predictor.gsm
    sizes = [g["mu_z"].size for g in gsm]
    splits = np.cumsum(sizes)[:-1]
    mu_z = np.concatenate([g["mu_z"] for g in gsm])
    sd_z = np.sqrt(np.concatenate([g["var_z"] for g in gsm]))
    zero_wmean = all(np.max(np.abs(g["mu_w"])) < 1e-12 for g in gsm)
    diag_C0 = float(np.max(np.abs(C0 - np.diag(np.diag(C0)))) == 0.0)

    mode = "generic"
    if not blocks and zero_wmean:
        if len(gsm) == 1 and gsm[0]["V"] is None and diag_C0:
            mode = "diag"
        elif all(g["V"] is not None for g in gsm):
            mode = "woodbury"

    if mode == "diag":
        # fully factorized: one scalar integral per observed column
        c_diag = np.diag(C0)
        var_w = gsm[0]["var_w"][cols]
        mu_zc = gsm[0]["mu_z"][cols]
        sd_zc = np.sqrt(gsm[0]["var_z"][cols])
        r = x - m0

        def g_terms(z):
            var = c_diag + np.exp(2 * z) * var_w
            return -0.5 * (np.log(2 * np.pi * var) + r * r / var)

        # reference value decomposed per coordinate for vectorized MH
        e2z = np.exp(2 * mu_zc + 2 * sd_zc ** 2)
        var_ref = c_diag + e2z * var_w
        ref_terms = -0.5 * (np.log(2 * np.pi * var_ref) + r * r / var_ref)
        log_ref = float(ref_terms.sum())

        def run_ais(run_rng):
            betas = ais_cfg.schedule()
            z = mu_zc + sd_zc * run_rng.standard_normal(mu_zc.size)
            logw = 0.0
            for b_prev, b in zip(betas[:-1], betas[1:]):
                logw += (b - b_prev) * float((g_terms(z) - ref_terms).sum())
                for _ in range(ais_cfg.transitions):
                    prop = z + 0.7 * sd_zc * run_rng.standard_normal(z.size)
                    dlp = (-0.5 * ((prop - mu_zc) / sd_zc) ** 2
                           + 0.5 * ((z - mu_zc) / sd_zc) ** 2)
                    dll = b * (g_terms(prop) - g_terms(z))
                    accept = np.log(run_rng.random(z.size)) < dlp + dll
                    z = np.where(accept, prop, z)
            return logw
    else:
        if mode == "woodbury":
            Vg = np.vstack([g["V"][:, cols] for g in gsm])
            var_w = np.concatenate([g["var_w"] for g in gsm])
            L0 = np.linalg.cholesky(C0)
            rhat = solve_triangular(L0, x - m0, lower=True)
            Vhat = solve_triangular(L0, Vg.T, lower=True)     # d x K
            bvec = Vhat.T @ rhat
            Gm = Vhat.T @ Vhat
            c0 = float(rhat @ rhat)
            logdet0 = 2.0 * float(np.sum(np.log(np.diag(L0))))
            dsub = cols.size

            def g_of_z(z):
                dvec = np.exp(2 * z) * var_w
                ds = np.sqrt(np.maximum(dvec, VAR_FLOOR))
                Msym = np.eye(ds.size) + ds[:, None] * Gm * ds[None, :]
                _, logdet_m = np.linalg.slogdet(Msym)
                y = np.linalg.solve(Msym, ds * bvec)
                quad = c0 - float((ds * bvec) @ y)
                return -0.5 * (quad + logdet0 + logdet_m
                               + dsub * np.log(2 * np.pi))
        else:
            def conditional_gaussian(z):
                parts = np.split(z, splits)
                m = m0.copy()
                C = C0.copy()
                for g, zg in zip(gsm, parts):
                    mu_u = np.exp(zg) * g["mu_w"]
                    var_u = np.exp(2 * zg) * g["var_w"]
                    Vs = g["V"][:, cols] if g["V"] is not None else None
                    if Vs is None:
                        C[np.diag_indices(C.shape[0])] += \
                            np.maximum(var_u[cols], VAR_FLOOR)
                        m += mu_u[cols]
                    else:
                        C += Vs.T @ (np.maximum(var_u, VAR_FLOOR)[:, None] * Vs)
                        m += mu_u @ Vs
                return m, C

            def g_of_z(z):
                m, C = conditional_gaussian(z)
                return discrete_marginal_loglik(x, m, C, blocks, A,
                                                exact_limit, vb_iters)

        def run_ais(run_rng):
            def log_ratio(z):
                return g_of_z(z) - log_ref

            def init_sampler(r):
                return mu_z + sd_z * r.standard_normal(mu_z.size)

            def transition(z, beta, r):
                cur_g = g_of_z(z)
                for i in range(z.size):
                    prop = z.copy()
                    prop[i] = z[i] + 0.7 * sd_z[i] * r.standard_normal()
                    new_g = g_of_z(prop)
                    dlp = (-0.5 * ((prop[i] - mu_z[i]) / sd_z[i]) ** 2
                           + 0.5 * ((z[i] - mu_z[i]) / sd_z[i]) ** 2)
                    if np.log(r.random()) < dlp + beta * (new_g - cur_g):
                        z, cur_g = prop, new_g
                return z

            return ais_log_weight(log_ratio, init_sampler, transition,
                                  ais_cfg, run_rng)

    logws = [run_ais(derive_rng(int(rng.integers(2 ** 62)), "ais", run))
             for run in range(ais_cfg.runs)]
    if collect_ais is not None:
        collect_ais.append([float(v) for v in logws])
    out = log_ref + logmeanexp(logws)
    if not np.isfinite(out):
        raise NumericalFailure("non-finite predictive bound")
    return float(out)


# ---------------------------------------------------------------------------
# full-structure scoring
# ---------------------------------------------------------------------------

def score_structure(expr, X, mask, holdout, cfg, rng, derivation=None,
                    cache=None, structure_text=None):
    """Total held-out predictive score for one structure.

    Row estimates are combined across posterior samples by log-mean-exp;
    columns are scored identically on the transposed model.
    """
    from .expr import to_text
    from .grammar import derivation_of

    X = np.asarray(X, dtype=float)
    mask = np.ones_like(X, dtype=bool) if mask is None else np.asarray(mask, bool)
    if derivation is None:
        derivation = derivation_of(expr)
    text = structure_text or to_text(expr)
    ais_cfg = AISConfig(n_temps=cfg.ais_temps, transitions=cfg.ais_transitions,
                        runs=cfg.ais_runs)
    obs_r = holdout.observed_rows
    obs_c = holdout.observed_cols
    X_O = X[np.ix_(obs_r, obs_c)]
    mask_O = mask[np.ix_(obs_r, obs_c)]
    if holdout.held_rows.size == 0 and holdout.held_cols.size == 0:
        return PredictiveScore.combine(text, np.zeros(0), np.zeros(0), 0, [])

    samples = posterior_samples(X_O, mask_O, expr, derivation, cfg, rng,
                                cache=cache)
    ais_logs = []

    def score_side(states, held, obs_other, positions_obs, total, getrow,
                   side):
        if held.size == 0:
            return np.zeros(0)
        predictors = [RowPredictor(s, positions_obs, total, cfg)
                      for s in states]
        out = np.zeros(held.size)
        for j, idx in enumerate(held):
            x_full, m_full = getrow(idx)
            keep = m_full[obs_other]
            cols = np.flatnonzero(keep)
            if cols.size == 0:
                out[j] = 0.0
                continue
            x = x_full[obs_other][cols]
            vals = []
            for si, pred in enumerate(predictors):
                r = derive_rng(cfg.seed, "score", side, text, int(idx), si)
                vals.append(predictive_row_loglik(
                    x, pred, int(idx), cols, ais_cfg, r, cfg=cfg,
                    collect_ais=ais_logs))
            out[j] = logmeanexp(vals)
        return out

    row_scores = score_side(
        samples, holdout.held_rows, obs_c, obs_r, holdout.n,
        lambda i: (X[i], mask[i]), "row")

    tstates = [transpose_state(s, s.d, s.n) for s in samples]
    col_scores = score_side(
        tstates, holdout.held_cols, obs_r, obs_c, holdout.d,
        lambda j: (X[:, j], mask[:, j]), "col")

    return PredictiveScore.combine(text, row_scores, col_scores,
                                   len(samples), ais_logs)
