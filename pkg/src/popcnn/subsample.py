"""Gradient-driven non-uniform sampling of the time axis.

The time axis is sampled densely where the sensor-averaged response changes
fast and sparsely where it is flat. One schedule is built from the averaged
gradient of a reference set of samples and then applied to every matrix, so
all inputs share the same columns.

Selection walks the seconds in order, adding the absolute averaged gradient
of each step to a running sum; a second is kept when the sum strictly exceeds
the threshold, after which the sum restarts from zero. The first and last
seconds are always kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .signal_model import as_sensor_matrix

DEFAULT_THRESHOLD = 400.0


@dataclass(frozen=True, eq=False)
class SamplingSchedule:
    indices: np.ndarray
    threshold: float

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("schedule needs a non-empty 1-D index array")
        if idx[0] < 0 or np.any(np.diff(idx) <= 0):
            raise ValueError("schedule indices must be non-negative and strictly increasing")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return int(self.indices.size)

    def save(self, path) -> None:
        np.savetxt(path, self.indices, fmt="%d")

    @classmethod
    def load(cls, path, threshold: float = float("nan")) -> "SamplingSchedule":
        return cls(np.loadtxt(path, dtype=np.int64, ndmin=1), threshold)


def per_sample_gradient(matrix) -> np.ndarray:
    """Sensor-averaged first difference, one value per step between seconds."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] < 2:
        raise ValueError(f"need a 2-D matrix with >= 2 columns, got shape {m.shape}")
    return np.diff(m, axis=1).mean(axis=0)


def dataset_gradient(profiles) -> np.ndarray:
    profiles = [np.asarray(p, dtype=np.float64) for p in profiles]
    if not profiles:
        raise ValueError("dataset_gradient needs at least one profile")
    lengths = {p.shape for p in profiles}
    if len(lengths) != 1:
        raise ValueError(f"profiles have mixed lengths: {sorted(lengths)}")
    return np.mean(np.stack(profiles), axis=0)


def build_schedule(profile, threshold: float = DEFAULT_THRESHOLD) -> SamplingSchedule:
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    profile = np.ascontiguousarray(profile, dtype=np.float64)
    if profile.ndim != 1 or profile.size < 1:
        raise ValueError("profile must be a non-empty 1-D array")
    return SamplingSchedule(kernels.threshold_crossings(profile, float(threshold)),
                            float(threshold))


def apply_schedule(matrix, schedule: SamplingSchedule) -> np.ndarray:
    matrix = as_sensor_matrix(matrix)
    if schedule.indices[-1] >= matrix.shape[1]:
        raise IndexError(
            f"schedule index {int(schedule.indices[-1])} out of range for "
            f"{matrix.shape[1]} columns"
        )
    return as_sensor_matrix(matrix[:, schedule.indices])


def schedule_from_matrices(matrices, threshold: float = DEFAULT_THRESHOLD) -> SamplingSchedule:
    """Average the per-sample gradients of ``matrices`` and threshold the result."""
    return build_schedule(dataset_gradient(per_sample_gradient(m) for m in matrices), threshold)
