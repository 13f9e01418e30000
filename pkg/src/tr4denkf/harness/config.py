"""Experiment configuration (YAML on disk, nested dataclasses in memory)."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..core import ConfigurationError
from ..trustregion import TRParams

METHODS = ("pod", "ism", "tr")


@dataclass
class ModelConfig:
    kind: str = "lorenz96"
    n: int = 40
    forcing: float = 8.0
    dt: float = 0.05
    # RK4 steps between observation times; 4 puts the window in the
    # nonlinear regime where the radius control matters
    steps_per_window: int = 4
    spinup_steps: int = 500
    # only for kind == "linear"; None means identity
    matrix: list | None = None


@dataclass
class ObservationConfig:
    fraction: float = 0.5
    n_masks: int = 4
    std: float = 0.01
    mask_seed: int | None = None


@dataclass
class TRConfig:
    delta_max: float = 100.0
    # in model units: about the background error norm sqrt(trace B0)
    delta0: float = 0.3
    eta: float = 0.1
    theta1: float = 0.25
    theta2: float = 0.75
    gamma_inc: float = 1.4
    gamma_dec: float = 0.5
    basis: str = "anomaly"
    min_trace_b: float = 0.0
    min_radius: float = 1e-6

    def params(self) -> TRParams:
        return TRParams(self.delta_max, self.delta0, self.eta, self.theta1, self.theta2,
                        self.gamma_inc, self.gamma_dec)


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    observations: ObservationConfig = field(default_factory=ObservationConfig)
    tr: TRConfig = field(default_factory=TRConfig)
    n_steps: int = 10
    n_ens: int = 20
    seed: int = 0
    background_std: float = 0.05
    gamma: float = 0.95
    pod_scaling: str = "sqrt"
    iterations: int = 5
    ism_inner: str = "closed_form"
    methods: list = field(default_factory=lambda: list(METHODS))
    output_dir: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.observations.fraction <= 1:
            raise ConfigurationError("observation fraction must lie in (0, 1]")
        if not (self.observations.std > 0 and self.background_std > 0):
            raise ConfigurationError("noise scales must be positive")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigurationError(f"unknown methods {sorted(bad)}")
        if self.n_steps < 0 or self.n_ens < 1 or self.iterations < 1:
            raise ConfigurationError("need n_steps >= 0, n_ens >= 1, iterations >= 1")
        self.tr.params()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        nested = {"model": ModelConfig, "observations": ObservationConfig, "tr": TRConfig}
        for key, sub in nested.items():
            if key in d:
                sub_d = d[key] or {}
                bad = set(sub_d) - {f.name for f in dataclasses.fields(sub)}
                if bad:
                    raise ConfigurationError(f"unknown keys in [{key}]: {sorted(bad)}")
                d[key] = sub(**sub_d)
        return cls(**d)

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)

    def hash(self) -> str:
        """Digest of every field that affects the numbers (output_dir excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d["methods"] = sorted(set(d["methods"]))
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(yaml.safe_load(fh))


def dump_config(config: ExperimentConfig, path):
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
