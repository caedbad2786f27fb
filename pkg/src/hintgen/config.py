"""Run configuration: an INI-style file with one section per stage."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields

from ._seeding import short_hash
from .errors import InvalidArgumentError


class ConfigError(InvalidArgumentError):
    pass


@dataclass
class GlobalConfig:
    seed: int = 0
    deterministic: bool = True


@dataclass
class EngineConfig:
    sigma_noise: float = 0.05
    time_scale: float = 1.0
    c_plan: float = 0.01


@dataclass
class WorkloadConfig:
    n_tables: int = 8
    edge_density: float = 0.25
    n_base: int = 16
    n_variants: int = 7
    max_joins: int = 7


@dataclass
class TraindataConfig:
    n_candidates: int = 200
    alpha: float = 0.025
    subsample_ratio: float = 0.1
    n_runs: int = 3


@dataclass
class ModelConfig:
    latent_dim: int = 16
    hidden: tuple = (64, 64)
    beta: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 30


@dataclass
class EvalConfig:
    split_types: tuple = ("base_query",)
    confidence: float = 0.95
    n_slow: int = 19
    include_inference: bool = True


@dataclass
class Config:
    global_: GlobalConfig = field(default_factory=GlobalConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    traindata: TraindataConfig = field(default_factory=TraindataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def sections(self):
        for f in fields(self):
            yield f.name.rstrip("_"), getattr(self, f.name)

    def render(self) -> str:
        out = []
        for name, sec in self.sections():
            out.append(f"[{name}]")
            for f in fields(sec):
                out.append(f"{f.name} = {_format(getattr(sec, f.name))}")
            out.append("")
        return "\n".join(out)

    def fingerprint(self) -> str:
        return short_hash(self.render())


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(section: str, key: str, default, raw: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(x) for x in items)
            return tuple(items)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None
    return raw


def _validate(cfg: Config) -> None:
    checks = [
        (cfg.engine.sigma_noise >= 0, "engine.sigma_noise must be >= 0"),
        (cfg.engine.time_scale > 0, "engine.time_scale must be > 0"),
        (cfg.engine.c_plan >= 0, "engine.c_plan must be >= 0"),
        (cfg.workload.n_tables >= 2, "workload.n_tables must be >= 2"),
        (0 <= cfg.workload.edge_density <= 1, "workload.edge_density must be in [0, 1]"),
        (cfg.workload.n_base >= 1, "workload.n_base must be >= 1"),
        (cfg.workload.n_variants >= 1, "workload.n_variants must be >= 1"),
        (cfg.workload.max_joins >= 1, "workload.max_joins must be >= 1"),
        (cfg.traindata.n_candidates >= 2, "traindata.n_candidates must be >= 2"),
        (0 < cfg.traindata.alpha < 1, "traindata.alpha must be in (0, 1)"),
        (0 < cfg.traindata.subsample_ratio <= 1, "traindata.subsample_ratio must be in (0, 1]"),
        (cfg.traindata.n_runs >= 2, "traindata.n_runs must be >= 2"),
        (cfg.model.latent_dim >= 1, "model.latent_dim must be >= 1"),
        (len(cfg.model.hidden) >= 1 and min(cfg.model.hidden) >= 1,
         "model.hidden needs at least one positive width"),
        (cfg.model.beta >= 0, "model.beta must be >= 0"),
        (cfg.model.learning_rate > 0, "model.learning_rate must be > 0"),
        (cfg.model.batch_size >= 1, "model.batch_size must be >= 1"),
        (cfg.model.epochs >= 1, "model.epochs must be >= 1"),
        (0 < cfg.eval.confidence < 1, "eval.confidence must be in (0, 1)"),
        (cfg.eval.n_slow >= 1, "eval.n_slow must be >= 1"),
        (all(s in ("random", "leave_one_out", "base_query", "slow") for s in cfg.eval.split_types),
         "eval.split_types has an unknown split type"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def apply(cfg: Config, section: str, key: str, raw: str) -> None:
    target = {name: sec for name, sec in cfg.sections()}.get(section)
    if target is None:
        raise ConfigError(f"unknown section [{section}]")
    names = {f.name for f in fields(target)}
    if key not in names:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    setattr(target, key, _coerce(section, key, getattr(target, key), raw))


def parse_config(text: str, overrides: dict | None = None) -> Config:
    cfg = Config()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in parser.sections():
        for key, raw in parser.items(section):
            apply(cfg, section, key, raw)
    for dotted, raw in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        apply(cfg, section, key, raw)
    _validate(cfg)
    return cfg


def load_config(path=None, overrides: dict | None = None) -> Config:
    text = ""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_config(text, overrides)


def replace(cfg: Config, **sections) -> Config:
    return dataclasses.replace(cfg, **sections)
