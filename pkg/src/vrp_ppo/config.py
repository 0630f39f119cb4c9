"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Values are coerced to the type of
the matching :class:`ExperimentConfig` field; command-line flags override file
values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

from .instance import GeneratorConfig
from .nets import NetConfig
from .ppo import Hyperparams

MODES = ("train", "eval", "solve", "generate", "inspect")
CLASSES = ("C1", "C2", "C3", "cvrplib")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "train"
    instance_class: str = "C1"
    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    out: str = "runs"
    seed: int = 0
    eval_seed: int = 1_000_000
    split_seed: int = 0
    test_fraction: float = 0.15
    # generator
    n_min: int = 30
    n_max: int = 40
    m_min: int = 3
    m_max: int = 4
    capacity_fill_ratio: float = 0.8
    count: int = 10
    # PPO
    gamma: float = 0.99
    T: int = 10
    N: int = 8
    k: int = 100
    lr_actor: float = 1e-5
    lr_critic: float = 1e-5
    epochs_actor: int = 4
    epochs_critic: int = 4
    beta0: float = 1.0
    d_targ: float = 0.01
    matching: str = "exact"
    allow_noop: bool = True
    warmup_steps: int = 0
    checkpoint_every: int = 10
    # networks
    hidden: int = 27
    out_channels: int = 4
    depth: int = 3
    max_features: int = 1
    net_seed: int = 0
    # evaluation / solve
    T_eval: int = 100
    eval_instances: int = 10
    greedy_eval: bool = False
    eval_time_budget_seconds: Optional[float] = None

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.instance_class not in CLASSES:
            raise ConfigError(f"unknown instance_class {self.instance_class!r}")
        if self.instance_class == "cvrplib" and self.mode in ("train", "eval") and not self.dataset:
            raise ConfigError("instance_class=cvrplib needs a dataset directory")
        if self.mode == "eval" and not self.checkpoint:
            raise ConfigError("eval needs a checkpoint")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.eval_time_budget_seconds is not None and self.eval_time_budget_seconds < 0:
            raise ConfigError("eval_time_budget_seconds must be non-negative")
        self.hyperparams().validate()

    def hyperparams(self) -> Hyperparams:
        names = {f.name for f in fields(Hyperparams)}
        return Hyperparams(**{k: getattr(self, k) for k in names})

    def net_config(self) -> NetConfig:
        return NetConfig(hidden=self.hidden, out_channels=self.out_channels, depth=self.depth,
                         max_features=self.max_features, seed=self.net_seed)

    def generator(self, seed: int) -> GeneratorConfig:
        return GeneratorConfig(cls=self.instance_class, n_range=(self.n_min, self.n_max),
                               m_range=(self.m_min, self.m_max), seed=seed,
                               capacity_fill_ratio=self.capacity_fill_ratio)


def _coerce(field_type, raw: str, key: str):
    text = raw.strip()
    ftype = str(field_type)
    if text.lower() in ("none", "") and "Optional" in ftype:
        return None
    try:
        if "bool" in ftype:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in ftype:
            return int(text)
        if "float" in ftype:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def parse_config_text(text: str) -> dict:
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(known[key], value, key)
    return out


def load_config(path: Optional[str] = None, **overrides) -> ExperimentConfig:
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(known[key], value, key) if isinstance(value, str) else value
    return ExperimentConfig(**values)
