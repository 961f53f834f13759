"""Declarative run configuration.

A JSON document with the sections below; every key is optional and unknown
keys are rejected. Each command writes the fully resolved configuration as
``resolved_config.json`` next to its outputs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Optional

from .errors import InvalidConfig


@dataclass
class GeometrySection:
    width: Optional[int] = None
    height: Optional[int] = None
    frame_rate: float = 30.0
    bit_depth: int = 8


@dataclass
class AnalysisSection:
    gaps: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    block_size: int = 32
    weight: str = "exp2"


@dataclass
class GopSection:
    gop_size: int = 32
    intra_period: int = 64
    level_offsets: list = field(default_factory=lambda: [0, 1, 2, 3, 4, 5])


@dataclass
class SynthSection:
    sequences: int = 50
    frames: int = 33
    width: int = 128
    height: int = 128
    seed: int = 0
    epsilon: float = 0.1
    base_qps: list = field(default_factory=lambda: [20, 25, 30, 35, 40, 45, 50])
    coeffs: dict = field(default_factory=dict)


@dataclass
class ForestSection:
    n_estimators: int = 100
    max_depth: int = 16
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: Optional[object] = None


@dataclass
class TrainSection:
    model: str = "forest"
    use_chroma: bool = True
    folds: int = 5
    seed: int = 0
    log_target: bool = False


@dataclass
class RateControlSection:
    target_bitrate: Optional[float] = None
    c_low: float = 1.0
    c_high: Optional[float] = None
    q_start: int = 24
    strength: float = 1.0
    per_frame: bool = False
    base_qp: Optional[int] = None


@dataclass
class RunConfig:
    geometry: GeometrySection = field(default_factory=GeometrySection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    gop: GopSection = field(default_factory=GopSection)
    synth: SynthSection = field(default_factory=SynthSection)
    forest: ForestSection = field(default_factory=ForestSection)
    train: TrainSection = field(default_factory=TrainSection)
    rate_control: RateControlSection = field(default_factory=RateControlSection)
    threads: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise InvalidConfig(f"{where or 'config'}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise InvalidConfig(f"{where or 'config'}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) \
            else known[name].default
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)
