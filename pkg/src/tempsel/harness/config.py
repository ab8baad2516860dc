"""Run configuration: one nested JSON document with defaults for everything."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Tuple

import numpy as np

from tempsel.errors import ConfigError
from tempsel.select import SelectConfig
from tempsel.sgmcmc import SamplerConfig

STAGES = {"data": 1, "init": 2, "select": 3, "sample": 4, "grid": 5, "split": 6}


def derive_seed(master: int, repetition: int, stage: str) -> int:
    """Sub-seed for one (repetition, stage) pair, stable across runs."""
    ss = np.random.SeedSequence([int(master), int(repetition), STAGES[stage]])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # "synthetic" or "file"
    path: Optional[str] = None
    target_column: Optional[str] = None
    n: int = 2000
    d: int = 8
    tau2: float = 0.3
    generator: str = "mlp-teacher"
    teacher_hidden: int = 32
    num_classes: Optional[int] = None
    beta_true: float = 1.0
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.source not in ("synthetic", "file"):
            raise ConfigError(f"unknown data source {self.source!r}")
        if self.source == "file" and not (self.path and self.target_column):
            raise ConfigError("file data needs path and target_column")
        object.__setattr__(self, "split_fractions", tuple(float(f) for f in self.split_fractions))


@dataclass(frozen=True)
class RunConfig:
    task: str = "regression"
    data: DataConfig = field(default_factory=DataConfig)
    hidden: Tuple[int, ...] = (64,)
    sigma2: float = 0.1
    prior_variance: float = 0.1
    selector: str = "mle"  # "mle", "map" or "posthoc"
    select: SelectConfig = field(default_factory=SelectConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    grid: Optional[Tuple[float, ...]] = None
    repetitions: int = 1
    seed: int = 0
    output_dir: Optional[str] = None
    exact_sampler: bool = False
    exact_samples: int = 100

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.selector not in ("mle", "map", "posthoc"):
            raise ConfigError(f"unknown selector {self.selector!r}")
        if self.selector == "map" and self.select.weight_decay != 0:
            raise ConfigError("the map selector requires select.weight_decay = 0")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.task == "classification" and not self.data.num_classes:
            raise ConfigError("classification needs data.num_classes")
        if self.exact_sampler and (self.task != "regression" or self.hidden):
            raise ConfigError("the exact sampler needs a linear (hidden = []) regression model")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(b) for b in self.grid))

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d))  # tuples -> lists

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "data" in d:
                d["data"] = DataConfig(**d["data"])
            if "select" in d:
                sel = dict(d["select"])
                if isinstance(sel.get("scheduler"), list):
                    sel["scheduler"] = tuple(tuple(p) for p in sel["scheduler"])
                d["select"] = SelectConfig(**sel)
            if "sampler" in d:
                d["sampler"] = SamplerConfig(**d["sampler"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, seed=None, output_dir=None, grid=None) -> "RunConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = seed
        if output_dir is not None:
            kw["output_dir"] = output_dir
        if grid is not None:
            kw["grid"] = tuple(grid)
        return replace(self, **kw)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return RunConfig.from_dict(json.load(fh))


def save_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
