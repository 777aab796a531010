import numpy as np

from matgrammar.ais import AISConfig, ais_log_weight, ais_ratio, logmeanexp
from matgrammar.rng import derive_rng


def test_schedule_strictly_increasing_from_zero_to_one():
    cfg = AISConfig(n_temps=15)
    betas = cfg.schedule()
    assert betas[0] == 0.0
    assert betas[-1] == 1.0
    assert np.all(np.diff(betas) > 0)


def test_identity_target_gives_exactly_one():
    cfg = AISConfig(n_temps=8, transitions=1)
    rng = derive_rng(0, "ais-id")
    est = ais_ratio(lambda x: 0.0, lambda r: r.standard_normal(),
                    lambda x, b, r: x + 0.0, cfg, rng)
    assert est == 1.0


def _gaussian_ratio_setup(sigma_target=2.0):
    # reference N(0,1); target unnormalized exp(-x^2 / (2 sigma^2));
    # ratio of normalizers = sigma_target
    def log_ratio(x):
        return -0.5 * x * x / sigma_target ** 2 + 0.5 * x * x

    def init(r):
        return float(r.standard_normal())

    def transition(x, beta, r):
        # random-walk Metropolis invariant for the tempered density
        var = 1.0 / (1.0 - beta + beta / sigma_target ** 2)
        prop = x + np.sqrt(var) * r.standard_normal()
        logf = lambda v: -0.5 * v * v * (1 - beta) \
            - 0.5 * beta * v * v / sigma_target ** 2
        if np.log(r.random()) < logf(prop) - logf(x):
            return prop
        return x

    return log_ratio, init, transition


def test_gaussian_ratio_unbiased_quick():
    cfg = AISConfig(n_temps=12, transitions=2)
    log_ratio, init, transition = _gaussian_ratio_setup()
    ests = np.array([ais_ratio(log_ratio, init, transition, cfg,
                               derive_rng(7, "run", i)) for i in range(800)])
    assert np.all(ests > 0)
    se = ests.std(ddof=1) / np.sqrt(ests.size)
    assert abs(ests.mean() - 2.0) < 3 * se


def test_logmeanexp():
    vals = np.log([1.0, 3.0])
    assert np.isclose(logmeanexp(vals), np.log(2.0))
    assert logmeanexp([-np.inf, -np.inf]) == -np.inf
