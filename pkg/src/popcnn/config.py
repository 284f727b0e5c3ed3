"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. One file drives every command;
each command reads the keys it needs. Recognised keys::

    network    sensors width filters1 filters2 stride_w
    training   batch momentum lr_initial lr_final lr_divisor plateau_patience
               weight_decay epochs target_scale
    data       mode keep_seconds threshold_T midpoint
    synthetic  repeats_per_odor seconds noise_sigma label_noise_sigma qmb_scale
               train_odors essential_oil_odors novel_odors
    reporting  neutral_half_width human_human_r
    all        seed
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .pop_model import PopConfig
from .synth_data import DEFAULT_SPLIT_COUNTS, SynthConfig
from .training import TrainConfig

SEED_ENV = "POP_SEED"

_POP_KEYS = {"sensors": "sensors", "width": "width", "filters1": "filters1",
             "filters2": "filters2", "stride_w": "stride_w"}
_TRAIN_KEYS = {"batch": "batch_size", "momentum": "momentum", "lr_initial": "lr_initial",
               "lr_final": "lr_final", "lr_divisor": "lr_divisor",
               "plateau_patience": "plateau_patience", "weight_decay": "weight_decay",
               "epochs": "max_epochs", "target_scale": "target_scale"}
_SYNTH_KEYS = {"repeats_per_odor": "repeats_per_odor", "seconds": "seconds",
               "noise_sigma": "noise_sigma", "label_noise_sigma": "label_noise_sigma",
               "qmb_scale": "qmb_scale"}
_COUNT_KEYS = {"train_odors": "train", "essential_oil_odors": "essential_oils",
               "novel_odors": "novel"}
_OTHER_KEYS = {"mode", "keep_seconds", "threshold_T", "midpoint", "neutral_half_width",
               "human_human_r", "seed"}


@dataclass(frozen=True)
class RunConfig:
    pop: PopConfig = PopConfig()
    train: TrainConfig = TrainConfig()
    synth: SynthConfig = SynthConfig()
    split_counts: dict = field(default_factory=lambda: dict(DEFAULT_SPLIT_COUNTS))
    mode: str = "uniform"
    keep_seconds: int | None = 500
    threshold_T: float = 400.0
    midpoint: float = 15.0
    neutral_half_width: float = 5.0
    human_human_r: float | None = None
    seed: int = 0
    explicit: frozenset = frozenset()

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self,
            seed=seed,
            pop=replace(self.pop, seed=seed),
            train=replace(self.train, seed=seed),
            synth=replace(self.synth, seed=seed),
        )


def _convert(key: str, raw: str, target_type):
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as "
                          f"{target_type.__name__}") from None
    return raw


def _field_type(cls, name):
    for f in fields(cls):
        if f.name == name:
            return int if f.type in ("int", int) else float
    raise KeyError(name)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        known = (_POP_KEYS.keys() | _TRAIN_KEYS.keys() | _SYNTH_KEYS.keys()
                 | _COUNT_KEYS.keys() | _OTHER_KEYS)
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = raw
    return config_from_values(values)


def config_from_values(values: dict[str, str]) -> RunConfig:
    pop = {_POP_KEYS[k]: _convert(k, v, _field_type(PopConfig, _POP_KEYS[k]))
           for k, v in values.items() if k in _POP_KEYS}
    train = {_TRAIN_KEYS[k]: _convert(k, v, _field_type(TrainConfig, _TRAIN_KEYS[k]))
             for k, v in values.items() if k in _TRAIN_KEYS}
    synth = {_SYNTH_KEYS[k]: _convert(k, v, _field_type(SynthConfig, _SYNTH_KEYS[k]))
             for k, v in values.items() if k in _SYNTH_KEYS}
    counts = dict(DEFAULT_SPLIT_COUNTS)
    for k, split in _COUNT_KEYS.items():
        if k in values:
            counts[split] = _convert(k, values[k], int)
    if "sensors" in pop:
        synth["sensors"] = pop["sensors"]
    cfg = RunConfig(
        pop=PopConfig(**pop),
        train=TrainConfig(**train),
        synth=SynthConfig(**synth),
        split_counts=counts,
        explicit=frozenset(values),
    )
    other = {}
    if "mode" in values:
        if values["mode"] not in ("uniform", "nonuniform"):
            raise ConfigError(f"mode must be uniform or nonuniform, got {values['mode']!r}")
        other["mode"] = values["mode"]
    if "keep_seconds" in values:
        raw = values["keep_seconds"]
        other["keep_seconds"] = None if raw.lower() in ("none", "all") else _convert(
            "keep_seconds", raw, int)
    for k in ("threshold_T", "midpoint", "neutral_half_width", "human_human_r"):
        if k in values:
            other[k] = _convert(k, values[k], float)
    cfg = replace(cfg, **other)
    seed = _convert("seed", values["seed"], int) if "seed" in values else None
    return cfg.with_seed(seed) if seed is not None else cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def resolve_seed(cfg: RunConfig, cli_seed: int | None) -> RunConfig:
    """``--seed`` beats the config file, which beats ``$POP_SEED``; default 0."""
    if cli_seed is not None:
        return cfg.with_seed(cli_seed)
    if "seed" in cfg.explicit:
        return cfg
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return cfg.with_seed(int(env))
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    return cfg.with_seed(cfg.seed)
