"""Annealed importance sampling for ratios of normalizing constants.

Interpolates from an exactly sampleable reference to the target through a
geometric schedule in inverse temperature; the accumulated weight is an
unbiased, always-positive estimator of the ratio, hence a stochastic lower
bound via Markov's inequality.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AISConfig:
    n_temps: int = 20          # intermediate temperatures (beta > 0)
    transitions: int = 2       # kernel applications per temperature
    runs: int = 5              # independent runs averaged per estimate
    beta_min: float = 0.01

    def schedule(self):
        """Inverse temperatures, strictly increasing from 0 to 1."""
        betas = np.concatenate([[0.0], np.geomspace(self.beta_min, 1.0,
                                                    self.n_temps)])
        return betas


def ais_log_weight(log_ratio_fn, init_sampler, transition, config, rng):
    """One AIS run; returns the log importance weight.

    log_ratio_fn(x) = log target(x) - log reference(x) (both unnormalized in
    the same measure); init_sampler draws exactly from the reference;
    transition(x, beta, rng) leaves reference^(1-beta) target^beta invariant.
    """
    betas = config.schedule()
    x = init_sampler(rng)
    logw = 0.0
    for b_prev, b in zip(betas[:-1], betas[1:]):
        logw += (b - b_prev) * log_ratio_fn(x)
        for _ in range(config.transitions):
            x = transition(x, b, rng)
    return logw


def ais_ratio(log_ratio_fn, init_sampler, transition, config, rng):
    """A single positive, unbiased estimate of the normalizer ratio."""
    return float(np.exp(ais_log_weight(log_ratio_fn, init_sampler,
                                       transition, config, rng)))


def logmeanexp(values):
    values = np.asarray(values, dtype=float)
    m = values.max()
    if not np.isfinite(m):
        return m
    return float(m + np.log(np.mean(np.exp(values - m))))
