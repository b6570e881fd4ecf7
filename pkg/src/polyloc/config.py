from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

PROPOSALS = ("polygon", "baseline")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of a simulation run.

    Defaults are the desk-scale setup; :meth:`reference_scale` gives the
    100-agent / 13-anchor reference network.
    """

    width: float = 30.0
    height: float = 30.0
    n_agents: int = 20
    n_anchors: int = 5
    comm_range: float = 10.0
    lambda_inv: float = 0.38
    n_edges: int = 16
    poa_iterations: int = 2
    n_samples: int = 250
    nbp_iterations: int = 5
    proposal: str = "polygon"
    outage_threshold: float = 1.0
    n_trials: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("width", "height", "lambda_inv", "outage_threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.comm_range < 0:
            raise ConfigError(f"comm_range must be non-negative, got {self.comm_range}")
        for name in ("n_agents", "n_edges", "poa_iterations", "n_samples", "nbp_iterations", "n_trials"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.n_anchors < 0:
            raise ConfigError(f"n_anchors must be non-negative, got {self.n_anchors}")
        if self.n_edges < 3:
            raise ConfigError(f"n_edges must be at least 3, got {self.n_edges}")
        if self.proposal not in PROPOSALS:
            raise ConfigError(f"proposal must be one of {PROPOSALS}, got {self.proposal!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    @classmethod
    def reference_scale(cls, **overrides) -> RunConfig:
        base = dict(
            width=100.0,
            height=100.0,
            n_agents=100,
            n_anchors=13,
            comm_range=20.0,
            n_trials=200,
        )
        base.update(overrides)
        return cls(**base)

    def with_(self, **changes) -> RunConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))
