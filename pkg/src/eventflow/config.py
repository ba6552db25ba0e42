"""Run configuration read from a sectioned TOML file.

Precedence, lowest to highest: built-in defaults, the ``--config`` file,
command-line flags.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields, replace
from datetime import date
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigInvalid
from .events import FilterRules
from .features import FEATURE_SETS
from .gateway import GatewayConfig, RetryPolicy
from .models import MODEL_KINDS, ModelSpec
from .popularity import SelectionConfig
from .rolling import GridSpec, RollingConfig
from .synth import SynthConfig

SECTIONS = ("paths", "gateway", "selection", "filter", "features", "model", "rolling", "grid", "synth",
            "explain")


@dataclass(frozen=True)
class Paths:
    data_dir: Path = Path("data")
    out_dir: Path = Path("out")

    def data(self, name: str) -> Path:
        return self.data_dir / name

    def out(self, name: str) -> Path:
        return self.out_dir / name


@dataclass(frozen=True)
class FeatureOptions:
    feature_set: str = "FS5"
    popularity_lag: int | None = 1
    exhibition_split: bool = False
    segment: str | None = None

    def __post_init__(self):
        if self.feature_set not in FEATURE_SETS:
            raise ConfigInvalid(f"features.set must be one of {FEATURE_SETS}, got {self.feature_set!r}")
        if self.popularity_lag is not None and self.popularity_lag < 1:
            raise ConfigInvalid("features.popularity_lag must be >= 1 or 'none'")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    paths: Paths = field(default_factory=Paths)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    filter: FilterRules = field(default_factory=FilterRules)
    features: FeatureOptions = field(default_factory=FeatureOptions)
    rolling: RollingConfig = field(default_factory=RollingConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    synth: SynthConfig = field(default_factory=SynthConfig)
    top_k: int = 10

    @property
    def model(self) -> ModelSpec:
        return self.rolling.model


def _pick(section: dict, name: str, allowed) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigInvalid(f"[{name}] has unknown keys: {sorted(unknown)}")
    return section


def _build(raw: dict, base: RunConfig) -> RunConfig:
    unknown = set(raw) - set(SECTIONS) - {"seed"}
    if unknown:
        raise ConfigInvalid(f"unknown top-level keys: {sorted(unknown)}")
    cfg = base
    if "seed" in raw:
        cfg = replace(cfg, seed=int(raw["seed"]))
    if "paths" in raw:
        p = _pick(raw["paths"], "paths", ("data_dir", "out_dir"))
        cfg = replace(cfg, paths=Paths(**{k: Path(v) for k, v in {**vars(cfg.paths), **p}.items()}))
    if "gateway" in raw:
        g = dict(_pick(raw["gateway"], "gateway", ("endpoint_url", "model_name", "temperature",
                                                   "max_in_flight", "mode", "timeout", "retry")))
        if "retry" in g:
            g["retry"] = RetryPolicy(**g["retry"])
        cfg = replace(cfg, gateway=replace(cfg.gateway, **g))
    if "selection" in raw:
        s = _pick(raw["selection"], "selection", ("top_g", "temporal_threshold"))
        cfg = replace(cfg, selection=replace(cfg.selection, **s))
    if "filter" in raw:
        f = dict(_pick(raw["filter"], "filter", ("allowed_types", "max_sessions", "venue_whitelist")))
        for k in ("allowed_types", "venue_whitelist"):
            if k in f:
                f[k] = frozenset(f[k])
        cfg = replace(cfg, filter=replace(cfg.filter, **f))
    if "features" in raw:
        f = dict(_pick(raw["features"], "features", ("set", "popularity_lag", "exhibition_split", "segment")))
        if "set" in f:
            f["feature_set"] = f.pop("set")
        if f.get("popularity_lag") == "none":
            f["popularity_lag"] = None
        cfg = replace(cfg, features=replace(cfg.features, **f))
    model = cfg.rolling.model
    if "model" in raw:
        m = _pick(raw["model"], "model", ("kind", "params"))
        kind = m.get("kind", model.kind)
        if kind not in MODEL_KINDS:
            raise ConfigInvalid(f"model.kind must be one of {sorted(MODEL_KINDS)}, got {kind!r}")
        params = m.get("params", {})
        if kind == model.kind:
            params = {**vars(model.params), **params}
        model = ModelSpec(kind, params)
    r = dict(_pick(raw.get("rolling", {}), "rolling", ("first_origin", "horizon", "persist_trend")))
    cfg = replace(cfg, rolling=replace(cfg.rolling, model=model, **r))
    if "grid" in raw:
        g = _pick(raw["grid"], "grid", ("learning_rates", "max_depths", "n_estimators", "weight_decays"))
        cfg = replace(cfg, grid=GridSpec(**{**vars(cfg.grid), **{k: tuple(v) for k, v in g.items()}}))
    if "synth" in raw:
        s = dict(_pick(raw["synth"], "synth", [f.name for f in fields(SynthConfig)]))
        if isinstance(s.get("start"), str):
            s["start"] = date.fromisoformat(s["start"])
        if "weekly_base" in s:
            s["weekly_base"] = tuple(s["weekly_base"])
        cfg = replace(cfg, synth=replace(cfg.synth, **s))
    if "explain" in raw:
        e = _pick(raw["explain"], "explain", ("top_k",))
        cfg = replace(cfg, top_k=int(e.get("top_k", cfg.top_k)))
    return cfg


def build_config(raw: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply a parsed TOML mapping over ``base``; any invalid value raises :class:`ConfigInvalid`."""
    try:
        return _build(raw, base or RunConfig())
    except ConfigInvalid:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigInvalid(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    cfg = build_config(raw)
    base = path.parent
    # relative paths in a config file are taken relative to that file
    return replace(cfg, paths=Paths(*(p if p.is_absolute() else Path(os.path.normpath(base / p))
                                      for p in (cfg.paths.data_dir, cfg.paths.out_dir))))
