"""Seeded synthetic e-nose datasets with a known, linearly recoverable label.

Every sensor follows ``a * (1 - exp(-t / rise)) * exp(-t / decay)`` plus
Gaussian noise. ``rise`` and ``decay`` are properties of the sensor and are
shared by all odors; the amplitude ``a`` is what an odor changes. The first
half of the array behaves like large metal-oxide sensors, the second half is
scaled down by ``qmb_scale`` like quartz microbalances.

The pleasantness of an odor is a weighted sum of its amplitudes, mapped
affinely onto [-15, 15] over the generated odors, plus optional label noise.
Repeats of one odor share amplitudes and label and differ only in sensor
noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .signal_model import DEFAULT_MIDPOINT, Dataset, OdorSample, center_label

LABEL_HALF_RANGE = 15.0
DEFAULT_SPLIT_COUNTS = {"train": 45, "essential_oils": 22, "novel": 21}
_ID_PREFIX = {"train": "train", "essential_oils": "oil", "novel": "novel"}


@dataclass(frozen=True)
class SynthConfig:
    n_odors: int = 45
    repeats_per_odor: int = 5
    sensors: int = 16
    seconds: int = 600
    rise_time_range: tuple[float, float] = (2.0, 10.0)
    # decay time constants in seconds, i.e. the denominator of t in exp(-t / decay)
    decay_constant_range: tuple[float, float] = (40.0, 150.0)
    amplitude_range: tuple[float, float] = (500.0, 15000.0)
    qmb_scale: float = 0.01
    noise_sigma: float = 1.0
    label_weights: tuple[float, ...] | None = None
    label_noise_sigma: float = 0.5
    midpoint: float = DEFAULT_MIDPOINT
    seed: int = 0

    def validate(self) -> None:
        if self.n_odors < 1 or self.repeats_per_odor < 1:
            raise ConfigError("n_odors and repeats_per_odor must be >= 1")
        if self.sensors < 1 or self.seconds < 2:
            raise ConfigError("need >= 1 sensor and >= 2 seconds")
        for name in ("rise_time_range", "decay_constant_range", "amplitude_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} is not ordered: ({lo}, {hi})")
            if name != "amplitude_range" and lo <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.amplitude_range[0] <= 0:
            raise ConfigError("amplitudes must be positive")
        if self.noise_sigma < 0 or self.label_noise_sigma < 0:
            raise ConfigError("noise sigmas must be >= 0")
        if self.qmb_scale <= 0:
            raise ConfigError("qmb_scale must be positive")
        if self.label_weights is not None and len(self.label_weights) != self.sensors:
            raise ConfigError(
                f"label_weights has {len(self.label_weights)} entries for {self.sensors} sensors"
            )


def _sensor_scales(config: SynthConfig) -> np.ndarray:
    scale = np.ones(config.sensors)
    scale[config.sensors - config.sensors // 2:] = config.qmb_scale
    return scale


def sensor_dynamics(config: SynthConfig):
    """Per-sensor ``(rise, decay, scale)`` arrays drawn from the config seed."""
    ss = np.random.SeedSequence([config.seed, 0])
    rng = np.random.default_rng(ss)
    rise = rng.uniform(*config.rise_time_range, size=config.sensors)
    decay = rng.uniform(*config.decay_constant_range, size=config.sensors)
    return rise, decay, _sensor_scales(config)


def label_weights(config: SynthConfig) -> np.ndarray:
    if config.label_weights is not None:
        return np.asarray(config.label_weights, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    # unit-variance contribution per sensor regardless of its count scale
    mean_amp = 0.5 * (config.amplitude_range[0] + config.amplitude_range[1])
    return rng.standard_normal(config.sensors) / (_sensor_scales(config) * mean_amp)


def response_shapes(config: SynthConfig) -> np.ndarray:
    """Noise-free unit-amplitude response of each sensor, ``(sensors, seconds)``."""
    rise, decay, _ = sensor_dynamics(config)
    t = np.arange(config.seconds, dtype=np.float64)
    return (1.0 - np.exp(-t / rise[:, None])) * np.exp(-t / decay[:, None])


def _odor_latents(config: SynthConfig, n_odors: int):
    _, _, scale = sensor_dynamics(config)
    odor_seeds = np.random.SeedSequence([config.seed, 2]).spawn(n_odors)
    amps = np.empty((n_odors, config.sensors))
    label_noise = np.empty(n_odors)
    for k, ss in enumerate(odor_seeds):
        rng = np.random.default_rng(ss)
        amps[k] = scale * rng.uniform(*config.amplitude_range, size=config.sensors)
        label_noise[k] = rng.standard_normal() * config.label_noise_sigma
    return amps, label_noise, odor_seeds


def _centered_labels(config: SynthConfig, amps: np.ndarray, label_noise: np.ndarray) -> np.ndarray:
    raw = amps @ label_weights(config)
    lo, hi = raw.min(), raw.max()
    if hi > lo:
        centered = -LABEL_HALF_RANGE + 2 * LABEL_HALF_RANGE * (raw - lo) / (hi - lo)
    else:
        centered = np.zeros_like(raw)
    return centered + label_noise


def _build(config: SynthConfig, splits: list[tuple[str, str]]) -> Dataset:
    """Generate one odor per ``(odor_id, split)`` entry, sharing one label scale."""
    config.validate()
    n = len(splits)
    amps, label_noise, odor_seeds = _odor_latents(config, n)
    labels = _centered_labels(config, amps, label_noise)
    shapes = response_shapes(config)
    samples = []
    for k, (odor_id, split) in enumerate(splits):
        raw_vas = float(labels[k] + config.midpoint)
        label = center_label(raw_vas, config.midpoint)
        clean = amps[k][:, None] * shapes
        for r, ss in enumerate(odor_seeds[k].spawn(config.repeats_per_odor)):
            rng = np.random.default_rng(ss)
            noisy = clean + config.noise_sigma * rng.standard_normal(clean.shape)
            samples.append(OdorSample(odor_id, r, noisy, label, split, raw_vas=raw_vas))
    return Dataset(tuple(samples))


def generate(config: SynthConfig = SynthConfig(), split: str = "train") -> Dataset:
    prefix = _ID_PREFIX.get(split, split)
    return _build(config, [(f"{prefix}_{k:03d}", split) for k in range(config.n_odors)])


def make_default_splits(config: SynthConfig = SynthConfig(), counts=None):
    """Three disjoint odor sets: training (45), essential oils (22), novel (21).

    All odors are generated together so labels share one scale.
    """
    counts = dict(DEFAULT_SPLIT_COUNTS if counts is None else counts)
    plan = [(f"{_ID_PREFIX[s]}_{k:03d}", s) for s in ("train", "essential_oils", "novel")
            for k in range(counts[s])]
    full = _build(replace(config, n_odors=len(plan)), plan)
    return full.split("train"), full.split("essential_oils"), full.split("novel")


def peak_amplitudes(matrix) -> np.ndarray:
    return np.asarray(matrix).max(axis=1)
