"""Component-matrix priors: Gaussian, Multinomial, Bernoulli, Integration.

Precision scheme for Gaussian leaves: entry (i, j) has variance
1/(lambda_i * lambda_j).  Precisions along a data axis are tied to a single
shared value; precisions along a latent axis are independent per index.
All densities are computed in the log domain.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .errors import InvalidHyper, ShapeMismatch


@dataclass(frozen=True)
class HyperParams:
    """Hyperpriors shared by all leaves; overridable via configuration."""
    gamma_a: float = 1.0     # shape of the Gamma hyperprior on precisions
    gamma_b: float = 1.0     # rate
    dirichlet_alpha: float = 1.0
    beta_a: float = 1.0
    beta_b: float = 1.0

    def validate(self):
        for name in ("gamma_a", "gamma_b", "dirichlet_alpha", "beta_a", "beta_b"):
            if getattr(self, name) <= 0:
                raise InvalidHyper(f"{name} must be positive")
        return self


def integration_matrix(n):
    """Lower-triangular ones (inclusive); multiplying cumulatively sums rows."""
    return np.tril(np.ones((n, n)))


@dataclass
class ComponentMatrix:
    """A realized leaf: values plus its prior kind and parameter state.

    For G, params holds 'row_prec' and 'col_prec' (scalars when tied, vectors
    when per-latent-index).  For M, params holds 'pi'; for B, 'pi' per column.
    C carries no parameters.
    """
    kind: str
    value: np.ndarray
    row_is_data: bool = True
    col_is_data: bool = True
    params: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.value.shape

    def copy(self):
        return ComponentMatrix(self.kind, self.value.copy(),
                               self.row_is_data, self.col_is_data,
                               {k: np.copy(v) for k, v in self.params.items()})

    def transposed(self):
        """The same component viewed over the transposed matrix."""
        params = dict(self.params)
        if self.kind == "G":
            params = {"row_prec": np.copy(self.params["col_prec"]),
                      "col_prec": np.copy(self.params["row_prec"])}
        return ComponentMatrix(self.kind, self.value.T.copy(),
                               self.col_is_data, self.row_is_data, params)

    def gaussian_entry_var(self):
        """Per-entry variance matrix (broadcast of the two precision axes)."""
        r = np.atleast_1d(np.asarray(self.params["row_prec"], dtype=float))
        c = np.atleast_1d(np.asarray(self.params["col_prec"], dtype=float))
        return 1.0 / np.outer(np.broadcast_to(r, (self.shape[0],)),
                              np.broadcast_to(c, (self.shape[1],)))

    def row_prec_vector(self):
        r = np.asarray(self.params["row_prec"], dtype=float)
        return np.broadcast_to(np.atleast_1d(r), (self.shape[0],))

    def col_prec_vector(self):
        c = np.asarray(self.params["col_prec"], dtype=float)
        return np.broadcast_to(np.atleast_1d(c), (self.shape[1],))


def sample_component(kind, dims, hyper, rng, row_is_data=True, col_is_data=True):
    """Draw parameters from the hyperprior, then entries from the prior."""
    hyper.validate()
    n, d = dims
    if kind == "C":
        if n != d:
            raise ShapeMismatch("integration matrix must be square")
        return ComponentMatrix("C", integration_matrix(n), row_is_data, col_is_data)
    if kind == "G":
        row_prec = (rng.gamma(hyper.gamma_a, 1.0 / hyper.gamma_b) if row_is_data
                    else rng.gamma(hyper.gamma_a, 1.0 / hyper.gamma_b, size=n))
        col_prec = (rng.gamma(hyper.gamma_a, 1.0 / hyper.gamma_b) if col_is_data
                    else rng.gamma(hyper.gamma_a, 1.0 / hyper.gamma_b, size=d))
        comp = ComponentMatrix("G", np.zeros((n, d)), row_is_data, col_is_data,
                               {"row_prec": row_prec, "col_prec": col_prec})
        comp.value = rng.standard_normal((n, d)) * np.sqrt(comp.gaussian_entry_var())
        return comp
    if kind == "M":
        pi = rng.dirichlet(np.full(d, hyper.dirichlet_alpha))
        assign = rng.choice(d, size=n, p=pi)
        value = np.zeros((n, d))
        value[np.arange(n), assign] = 1.0
        return ComponentMatrix("M", value, row_is_data, col_is_data, {"pi": pi})
    if kind == "B":
        pi = rng.beta(hyper.beta_a, hyper.beta_b, size=d)
        value = (rng.random((n, d)) < pi).astype(float)
        return ComponentMatrix("B", value, row_is_data, col_is_data, {"pi": pi})
    raise ValueError(f"unknown component kind {kind!r}")


def log_density(kind, matrix, params):
    """Exact log prior density of the entries given the parameters."""
    x = np.asarray(matrix, dtype=float)
    if kind == "C":
        return 0.0 if np.array_equal(x, integration_matrix(x.shape[0])) else -np.inf
    if kind == "G":
        rp = np.broadcast_to(np.atleast_1d(np.asarray(params["row_prec"], float)), (x.shape[0],))
        cp = np.broadcast_to(np.atleast_1d(np.asarray(params["col_prec"], float)), (x.shape[1],))
        prec = np.outer(rp, cp)
        if prec.shape != x.shape:
            raise ShapeMismatch(f"{prec.shape} vs {x.shape}")
        return 0.5 * np.sum(np.log(prec)) - 0.5 * np.sum(prec * x * x) \
            - 0.5 * x.size * np.log(2 * np.pi)
    if kind == "M":
        pi = np.asarray(params["pi"], dtype=float)
        if x.shape[1] != pi.size:
            raise ShapeMismatch(f"{x.shape} vs pi of length {pi.size}")
        one_hot = (np.all((x == 0) | (x == 1), axis=None)
                   and np.array_equal(x.sum(axis=1), np.ones(x.shape[0])))
        if not one_hot:
            return -np.inf
        return float(np.sum(x @ np.log(pi)))
    if kind == "B":
        pi = np.asarray(params["pi"], dtype=float)
        if x.shape[1] != pi.size:
            raise ShapeMismatch(f"{x.shape} vs pi of length {pi.size}")
        if not np.all((x == 0) | (x == 1)):
            return -np.inf
        return float(np.sum(x * np.log(pi) + (1 - x) * np.log1p(-pi)))
    raise ValueError(f"unknown component kind {kind!r}")


# ---------------------------------------------------------------------------
# conjugate hyperparameter updates
# ---------------------------------------------------------------------------

def resample_gaussian_precisions(comp, hyper, rng, update="both"):
    """Gibbs update of a Gaussian leaf's row/col precisions.

    Conditioned on the other axis, the posterior for a tied precision is
    Gamma(a + count/2, b + sum(scaled squares)/2); per-index latent
    precisions get one such update each.
    """
    x = comp.value
    n, d = x.shape
    if update in ("both", "row"):
        cp = comp.col_prec_vector()
        scaled = (x * x) @ cp          # per-row sum of lambda_j x_ij^2
        if comp.row_is_data:
            shape = hyper.gamma_a + 0.5 * n * d
            rate = hyper.gamma_b + 0.5 * scaled.sum()
            comp.params["row_prec"] = float(rng.gamma(shape, 1.0 / rate))
        else:
            shape = hyper.gamma_a + 0.5 * d
            rate = hyper.gamma_b + 0.5 * scaled
            comp.params["row_prec"] = rng.gamma(shape, 1.0 / rate)
    if update in ("both", "col"):
        rp = comp.row_prec_vector()
        scaled = rp @ (x * x)
        if comp.col_is_data:
            shape = hyper.gamma_a + 0.5 * n * d
            rate = hyper.gamma_b + 0.5 * scaled.sum()
            comp.params["col_prec"] = float(rng.gamma(shape, 1.0 / rate))
        else:
            shape = hyper.gamma_a + 0.5 * n
            rate = hyper.gamma_b + 0.5 * scaled
            comp.params["col_prec"] = rng.gamma(shape, 1.0 / rate)
    return comp.params


def resample_multinomial_pi(comp, hyper, rng):
    counts = comp.value.sum(axis=0)
    comp.params["pi"] = rng.dirichlet(hyper.dirichlet_alpha + counts)
    return comp.params


def resample_bernoulli_pi(comp, hyper, rng):
    ones = comp.value.sum(axis=0)
    zeros = comp.value.shape[0] - ones
    comp.params["pi"] = rng.beta(hyper.beta_a + ones, hyper.beta_b + zeros)
    return comp.params


def resample_hyperparams(comp, hyper, rng):
    """Dispatch the conjugate update for a component's parameters."""
    if comp.kind == "G":
        return resample_gaussian_precisions(comp, hyper, rng)
    if comp.kind == "M":
        return resample_multinomial_pi(comp, hyper, rng)
    if comp.kind == "B":
        return resample_bernoulli_pi(comp, hyper, rng)
    return comp.params


def gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x
