"""Run configuration: nested YAML sections per module, validated ranges,
defaults filled for absent keys. Parsing is total: every input yields either
a valid RunConfig or a ConfigError naming the offending key path."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict

import yaml

from .data import DatasetSpec
from .nn import OptimizerConfig
from .uncertainty import BusConfig
from .unstability import VatConfig


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass
class ModelConfig:
    hidden: tuple[int, ...] = (64, 32)


@dataclass
class SslConfig:
    alpha: float = 0.9
    beta: float = 0.05
    mu: float = 1.0
    t_max: int | None = None  # None: half of the planned total steps


@dataclass
class AugmentConfig:
    # weak jitter sigma = sigma_scale * mean per-feature std of the train set
    sigma_scale: float = 0.05
    strong_sigma_factor: float = 3.0
    drop_prob: float = 0.1
    scale_range: tuple[float, float] = (0.8, 1.25)
    flip_prob: float = 0.5
    shift_fraction: float = 0.125


@dataclass
class LoopConfig:
    ip_fraction: float = 0.10
    max_cycles: int = 30
    k_fraction: float | None = 0.025  # per-selector K as a train-set fraction
    k: int | None = None  # absolute K overrides k_fraction
    budget_fraction: float = 0.20
    steps_per_cycle: int = 2000
    eval_interval: int = 200
    early_stop_patience: int = 3
    disable_adaptive_threshold: bool = False  # fixed alpha+beta cutoff
    disable_aus: bool = False
    disable_bus: bool = False
    random_sampling: bool = False  # replace both selectors with a uniform draw
    cold_start: bool = False  # reinitialize the model each cycle
    target_accuracy: float | None = None


@dataclass
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    ssl: SslConfig = field(default_factory=SslConfig)
    aus: VatConfig = field(default_factory=VatConfig)
    bus: BusConfig = field(default_factory=BusConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    seed: int = 0
    output_dir: str | None = None

    def k_per_selector(self, n_train: int) -> int:
        if self.loop.k is not None:
            return self.loop.k
        return int(self.loop.k_fraction * n_train)

    def budget(self, n_train: int) -> int:
        return int(self.loop.budget_fraction * n_train)

    def t_max(self) -> int:
        if self.ssl.t_max is not None:
            return self.ssl.t_max
        planned = self.loop.steps_per_cycle * (self.loop.max_cycles + 1)
        return max(planned // 2, 1)


_SECTIONS = {
    "dataset": DatasetSpec,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "augment": AugmentConfig,
    "ssl": SslConfig,
    "aus": VatConfig,
    "bus": BusConfig,
    "loop": LoopConfig,
}

_TUPLE_KEYS = {
    "dataset.class_ratio",
    "dataset.splits",
    "model.hidden",
    "augment.scale_range",
}


def parse_config(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("<document>", f"invalid YAML: {e}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "top level must be a mapping")
    cfg = RunConfig()
    for key, value in raw.items():
        if key == "seed":
            cfg.seed = _coerce("seed", value, int)
        elif key == "output_dir":
            if value is not None and not isinstance(value, str):
                raise ConfigError("output_dir", "expected a string")
            cfg.output_dir = value
        elif key in _SECTIONS:
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(key, "expected a mapping")
            _fill_section(getattr(cfg, key), key, value)
        else:
            raise ConfigError(key, "unknown key")
    validate_config(cfg)
    return cfg


def _fill_section(obj, section: str, values: dict) -> None:
    known = {f.name: f for f in fields(obj)}
    for key, value in values.items():
        path = f"{section}.{key}"
        if key not in known:
            raise ConfigError(path, "unknown key")
        type_str = known[key].type  # a string under `from __future__ import annotations`
        if path in _TUPLE_KEYS:
            if value is None:
                setattr(obj, key, None)
                continue
            if not isinstance(value, (list, tuple)):
                raise ConfigError(path, "expected a list")
            kind = int if path == "model.hidden" else float
            setattr(obj, key, tuple(_coerce(path, v, kind) for v in value))
        elif value is None and "None" in type_str:
            setattr(obj, key, None)
        elif "bool" in type_str:
            if not isinstance(value, bool):
                raise ConfigError(path, "expected a boolean")
            setattr(obj, key, value)
        elif "int" in type_str:
            setattr(obj, key, _coerce(path, value, int))
        elif "float" in type_str:
            setattr(obj, key, _coerce(path, value, float))
        elif "str" in type_str:
            if not isinstance(value, str):
                raise ConfigError(path, "expected a string")
            setattr(obj, key, value)
        else:
            raise ConfigError(path, "unsupported value")


def _coerce(path: str, value, kind):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    raise AssertionError(kind)


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def validate_config(cfg: RunConfig) -> None:
    d = cfg.dataset
    try:
        d.validate()
    except ValueError as e:
        raise ConfigError("dataset", str(e)) from None

    _check(all(h >= 1 for h in cfg.model.hidden) and len(cfg.model.hidden) >= 1,
           "model.hidden", "hidden sizes must be positive")

    o = cfg.optimizer
    _check(o.learning_rate > 0, "optimizer.learning_rate", "must be > 0")
    _check(0 <= o.momentum < 1, "optimizer.momentum", "must be in [0, 1)")
    _check(o.weight_decay >= 0, "optimizer.weight_decay", "must be >= 0")
    _check(o.batch_size >= 1, "optimizer.batch_size", "must be >= 1")

    a = cfg.augment
    _check(a.sigma_scale >= 0, "augment.sigma_scale", "must be >= 0")
    _check(a.strong_sigma_factor >= 1, "augment.strong_sigma_factor",
           "strong jitter must not be gentler than weak")
    _check(0 <= a.drop_prob <= 1, "augment.drop_prob", "must be in [0, 1]")
    _check(0 <= a.flip_prob <= 1, "augment.flip_prob", "must be in [0, 1]")
    _check(0 <= a.shift_fraction < 1, "augment.shift_fraction", "must be in [0, 1)")
    _check(a.scale_range[0] <= a.scale_range[1], "augment.scale_range",
           "lo must be <= hi")

    s = cfg.ssl
    _check(0 < s.alpha < 1, "ssl.alpha", "must be in (0, 1)")
    _check(s.beta >= 0, "ssl.beta", "must be >= 0")
    _check(s.alpha + s.beta <= 1, "ssl.beta", "alpha + beta must be <= 1")
    _check(s.mu >= 0, "ssl.mu", "must be >= 0")
    if s.t_max is not None:
        _check(s.t_max >= 1, "ssl.t_max", "must be positive")

    v = cfg.aus
    _check(v.tau > 0, "aus.tau", "must be > 0")
    _check(v.n_t >= 1, "aus.n_t", "must be >= 1")
    if v.xi is not None:
        _check(v.xi > 0, "aus.xi", "must be > 0")

    _check(cfg.bus.m >= 1, "bus.m", "must be >= 1")

    lp = cfg.loop
    _check(0 < lp.ip_fraction <= 1, "loop.ip_fraction", "must be in (0, 1]")
    _check(lp.max_cycles >= 0, "loop.max_cycles", "must be >= 0")
    _check(0 <= lp.budget_fraction <= 1, "loop.budget_fraction", "must be in [0, 1]")
    if lp.k is not None:
        _check(lp.k >= 0, "loop.k", "must be >= 0")
    else:
        _check(lp.k_fraction is not None and 0 <= lp.k_fraction <= 1,
               "loop.k_fraction", "must be in [0, 1]")
    _check(lp.steps_per_cycle >= 1, "loop.steps_per_cycle", "must be >= 1")
    _check(lp.eval_interval >= 1, "loop.eval_interval", "must be >= 1")
    _check(lp.early_stop_patience >= 1, "loop.early_stop_patience", "must be >= 1")
    if lp.target_accuracy is not None:
        _check(0 < lp.target_accuracy <= 1, "loop.target_accuracy",
               "must be in (0, 1]")
    if lp.random_sampling and (lp.disable_aus or lp.disable_bus):
        raise ConfigError("loop.random_sampling",
                          "mutually exclusive with disable_aus/disable_bus")
    if lp.disable_aus and lp.disable_bus:
        raise ConfigError("loop.disable_aus",
                          "disabling both selectors leaves no annotation path; "
                          "use random_sampling or budget_fraction 0")


def config_to_dict(cfg: RunConfig, include_output_dir: bool = True) -> dict:
    out = {}
    for name in _SECTIONS:
        section = asdict(getattr(cfg, name))
        for k, v in section.items():
            if isinstance(v, tuple):
                section[k] = list(v)
        out[name] = section
    out["seed"] = cfg.seed
    if include_output_dir:
        out["output_dir"] = cfg.output_dir
    return out


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def load_config(path: str) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())
