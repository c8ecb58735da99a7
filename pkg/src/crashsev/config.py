"""Pipeline configuration: one JSON file with per-step sections."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .probit.halton import HaltonConfig
from .probit.model import ModelSpec
from .raster import DEFAULT_CELL_KM


@dataclass
class GridConfig:
    cell_size_km: float = DEFAULT_CELL_KM
    # all four None -> smallest grid covering the input
    origin_lat: float | None = None
    origin_lon: float | None = None
    n_rows: int | None = None
    n_cols: int | None = None


@dataclass
class HotspotConfig:
    level: str = "Hot90"
    k: int = 4
    min_cells: int = 3


@dataclass
class EstimationConfig:
    max_iter: int = 500
    discrete_effects: bool = True


@dataclass
class LrConfig:
    level: float = 0.90
    pooled_df: int | None = None


@dataclass
class SynthConfig:
    n: int = 5000
    n_clusters: int = 4
    cluster_share: float = 0.8
    heterogeneous: bool = True
    n_rows: int = 40
    n_cols: int = 40


def _default_models() -> dict[str, dict]:
    return {"default": {
        "fixed_vars": ["hit_fixed_object", "drunk_driving", "unbelted"],
        "random_vars": ["exceeding_speed_limit", "young_driver"],
        "mean_shifters": {"exceeding_speed_limit": ["curve_road"]},
        "correlated": True,
        "n_draws": 1000,
    }}


@dataclass
class PipelineConfig:
    input: str = "crashes.csv"
    out_dir: str = "out"
    seed: int = 42
    columns: dict[str, str] = field(default_factory=dict)
    on_error: str = "raise"
    grid: GridConfig = field(default_factory=GridConfig)
    hotspots: HotspotConfig = field(default_factory=HotspotConfig)
    halton: dict[str, Any] = field(default_factory=lambda: {"bases": [], "skip": 10})
    models: dict[str, dict] = field(default_factory=_default_models)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    lrtests: LrConfig = field(default_factory=LrConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    draws: int | None = None  # overrides n_draws of every model

    def model_spec(self, district: str | int) -> ModelSpec:
        raw = dict(self.models.get(str(district), self.models["default"]))
        if self.draws is not None:
            raw["n_draws"] = self.draws
        h = self.halton or {}
        raw["halton"] = HaltonConfig(tuple(h.get("bases", ())), int(h.get("skip", 10)))
        return ModelSpec(**raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return _build(cls, d)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            cfg = cls.from_dict(json.load(fh))
        # relative paths resolve against the config file
        base = Path(path).resolve().parent
        cfg.input = str(base / cfg.input)
        cfg.out_dir = str(base / cfg.out_dir)
        return cfg

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _build(cls, d: dict):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} key(s): {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        default = known[name].default_factory if known[name].default_factory is not dataclasses.MISSING else None
        sub = default() if default is not None else None
        if dataclasses.is_dataclass(sub) and isinstance(value, dict):
            value = _build(type(sub), value)
        kwargs[name] = value
    return cls(**kwargs)
