"""Experiment-wide settings, loadable from a YAML (or JSON) file."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .costs import CostWeights, Margins
from .gnn import TrainConfig
from .kinematics import KinematicParams
from .optimizer import SolverConfig
from .simulation import SimConfig


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 3
    hidden: int = 64
    msg_hidden: int = 64
    recenter: bool = True


@dataclass(frozen=True)
class LabelConfig:
    taint_fraction: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    kinematics: KinematicParams = field(default_factory=KinematicParams)
    weights: CostWeights = field(default_factory=CostWeights)
    margins: Margins = field(default_factory=Margins)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    label: LabelConfig = field(default_factory=LabelConfig)

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        """Short stable digest of every setting."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in d:
                continue
            sub_cls = type(f.default_factory())
            sub = dict(d.pop(f.name) or {})
            known = {sf.name for sf in dataclasses.fields(sub_cls)}
            unknown = set(sub) - known
            if unknown:
                raise ValueError(f"unknown keys in [{f.name}]: {sorted(unknown)}")
            for k in ("bounds", "obstacle_radius"):
                if k in sub:
                    sub[k] = tuple(sub[k])
            kwargs[f.name] = sub_cls(**sub)
        if d:
            raise ValueError(f"unknown config sections: {sorted(d)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def replace(self, section, **changes):
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})
