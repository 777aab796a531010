"""Run configuration: every knob of the pipeline in one validated record."""

from dataclasses import asdict, dataclass, field, replace

from .components import HyperParams
from .errors import InvalidHyper


@dataclass(frozen=True)
class RunConfig:
    input: str = None
    seed: int = 0
    holdout_rows: float = 0.1      # fraction of rows held out (at least 1)
    holdout_cols: float = 0.1
    holdout_seed: int = None       # defaults to seed
    K: int = 3
    max_level: int = 4
    jobs: int = 1
    out: str = "run_out"
    init_sweeps: int = 200
    init_burn: int = 100
    gibbs_sweeps: int = 100
    n_samples: int = 10
    ais_temps: int = 20
    ais_transitions: int = 2
    ais_runs: int = 5
    rj_rate: float = 5.0
    dim_cap: int = 100
    dp_alpha: float = 1.0
    ibp_alpha: float = 2.0
    ibp_max_features: int = 25
    latent_default: int = 10
    exact_enum_limit: int = 1024
    vb_iters: int = 30
    hyper: HyperParams = field(default_factory=HyperParams)
    save_components: bool = False
    header_row: bool = False
    header_col: bool = False

    def validated(self):
        if self.K < 1:
            raise InvalidHyper("K must be at least 1")
        if self.max_level < 0:
            raise InvalidHyper("max_level must be nonnegative")
        if not (0 <= self.holdout_rows < 1 and 0 <= self.holdout_cols < 1):
            raise InvalidHyper("holdout fractions must lie in [0, 1)")
        if self.jobs < 1:
            raise InvalidHyper("jobs must be at least 1")
        for name in ("init_sweeps", "gibbs_sweeps", "n_samples", "ais_temps",
                     "ais_runs", "ais_transitions", "latent_default"):
            if getattr(self, name) < 1:
                raise InvalidHyper(f"{name} must be at least 1")
        self.hyper.validate()
        return self

    def resolved(self):
        cfg = self
        if cfg.holdout_seed is None:
            cfg = replace(cfg, holdout_seed=cfg.seed)
        return cfg.validated()

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if isinstance(data.get("hyper"), dict):
            data["hyper"] = HyperParams(**data["hyper"])
        return cls(**data)


# settings tuned for 100x100 recovery runs within the reduced time budget
REDUCED_PRESET = dict(init_sweeps=100, init_burn=50, gibbs_sweeps=60,
                      n_samples=8, max_level=2)
