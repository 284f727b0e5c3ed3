"""Odor samples, datasets and the preprocessing that turns raw sensor
matrices into fixed-size, unit-range network inputs.

A sensor matrix is a read-only float64 array with one row per sensor and one
column per second of acquisition.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

SPLITS = ("train", "essential_oils", "novel")
DEFAULT_MIDPOINT = 15.0


def as_sensor_matrix(values) -> np.ndarray:
    m = np.array(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"sensor matrix must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 2:
        raise ValueError(f"sensor matrix needs >= 1 row and >= 2 columns, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("sensor matrix contains non-finite values")
    m.flags.writeable = False
    return m


@dataclass(frozen=True, eq=False)
class NormStats:
    per_sensor_min: np.ndarray
    per_sensor_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.per_sensor_min, dtype=np.float64)
        hi = np.asarray(self.per_sensor_max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("min and max must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("per-sensor min exceeds max")
        object.__setattr__(self, "per_sensor_min", lo)
        object.__setattr__(self, "per_sensor_max", hi)

    def save(self, path) -> None:
        np.savetxt(path, np.column_stack([self.per_sensor_min, self.per_sensor_max]),
                   delimiter=",", fmt="%.17g")

    @classmethod
    def load(cls, path) -> "NormStats":
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
        if arr.shape[1] != 2:
            raise ValueError(f"{path}: expected two columns (min,max), got {arr.shape[1]}")
        return cls(arr[:, 0], arr[:, 1])


@dataclass(frozen=True, eq=False)
class OdorSample:
    odor_id: str
    repeat_index: int
    matrix: np.ndarray
    label: float
    split: str = "train"
    # raw rating as it appears in a manifest; kept so files round-trip exactly
    raw_vas: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_sensor_matrix(self.matrix))
        if not math.isfinite(self.label):
            raise ValueError(f"label for {self.odor_id} is not finite")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}; expected one of {SPLITS}")
        if self.repeat_index < 0:
            raise ValueError("repeat_index must be non-negative")


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: tuple[OdorSample, ...] = field(default_factory=tuple)
    norm_stats: NormStats | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def shape(self) -> tuple[int, int]:
        shapes = {s.matrix.shape for s in self.samples}
        if len(shapes) != 1:
            raise ValueError(f"samples do not share one matrix shape: {sorted(shapes)}")
        return shapes.pop()

    def split(self, name: str) -> "Dataset":
        return Dataset(tuple(s for s in self.samples if s.split == name), self.norm_stats)

    def odor_ids(self) -> list[str]:
        return list(self.groups())

    def groups(self) -> "OrderedDict[str, list[OdorSample]]":
        """Samples grouped by odor, in first-appearance order."""
        out: OrderedDict[str, list[OdorSample]] = OrderedDict()
        for s in self.samples:
            out.setdefault(s.odor_id, []).append(s)
        return out

    def select_odors(self, odor_ids) -> "Dataset":
        keep = set(odor_ids)
        return Dataset(tuple(s for s in self.samples if s.odor_id in keep), self.norm_stats)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked inputs ``(N, 1, m, n)`` and labels ``(N,)``."""
        self.shape  # noqa: B018 - raises on ragged shapes
        x = np.stack([s.matrix for s in self.samples])[:, None]
        y = np.array([s.label for s in self.samples], dtype=np.float64)
        return x, y

    def map_matrices(self, fn) -> "Dataset":
        return Dataset(tuple(replace(s, matrix=fn(s.matrix)) for s in self.samples),
                       self.norm_stats)


def truncate(matrix, keep_seconds: int) -> np.ndarray:
    matrix = as_sensor_matrix(matrix)
    if keep_seconds < 1:
        raise ValueError(f"keep_seconds must be positive, got {keep_seconds}")
    if keep_seconds > matrix.shape[1]:
        raise IndexError(f"keep_seconds {keep_seconds} exceeds {matrix.shape[1]} columns")
    return as_sensor_matrix(matrix[:, :keep_seconds])


def uniform_indices(n: int, target_width: int) -> np.ndarray:
    """``round(i * (n - 1) / (w - 1))`` for ``i < w`` in exact integer arithmetic."""
    if target_width < 2:
        raise ValueError(f"target_width must be >= 2, got {target_width}")
    if target_width > n:
        raise IndexError(f"target_width {target_width} exceeds {n} columns")
    i = np.arange(target_width, dtype=np.int64)
    den = target_width - 1
    return (2 * i * (n - 1) + den) // (2 * den)


def uniform_subsample(matrix, target_width: int) -> np.ndarray:
    matrix = as_sensor_matrix(matrix)
    return as_sensor_matrix(matrix[:, uniform_indices(matrix.shape[1], target_width)])


def fit_normalization(dataset: Dataset) -> NormStats:
    """Per-sensor min and max over every training-split sample."""
    train = [s.matrix for s in dataset.samples if s.split == "train"]
    if not train:
        raise ValueError("fit_normalization needs at least one training sample")
    rows = {m.shape[0] for m in train}
    if len(rows) != 1:
        raise ValueError(f"training samples disagree on sensor count: {sorted(rows)}")
    lo = np.min([m.min(axis=1) for m in train], axis=0)
    hi = np.max([m.max(axis=1) for m in train], axis=0)
    return NormStats(lo, hi)


def apply_normalization(matrix, stats: NormStats) -> np.ndarray:
    """Min-max scale each sensor row into [0, 1], clamping out-of-range values.

    A sensor whose training range is a single value maps to 0.5.
    """
    matrix = as_sensor_matrix(matrix)
    lo, hi = stats.per_sensor_min, stats.per_sensor_max
    if matrix.shape[0] != lo.shape[0]:
        raise ValueError(f"matrix has {matrix.shape[0]} sensors, stats cover {lo.shape[0]}")
    span = hi - lo
    flat = span == 0
    # a subnormal span can overflow to inf; the clamp below handles it
    with np.errstate(over="ignore"):
        scaled = (matrix - lo[:, None]) / np.where(flat, 1.0, span)[:, None]
    scaled = np.clip(scaled, 0.0, 1.0)
    scaled[flat] = 0.5
    return as_sensor_matrix(scaled)


def center_label(raw_vas: float, scale_midpoint: float = DEFAULT_MIDPOINT) -> float:
    if not (math.isfinite(raw_vas) and math.isfinite(scale_midpoint)):
        raise ValueError("center_label needs finite inputs")
    return raw_vas - scale_midpoint


# -- files ------------------------------------------------------------------

def load_sample_csv(path) -> np.ndarray:
    return as_sensor_matrix(np.loadtxt(path, delimiter=",", ndmin=2))


def save_sample_csv(path, matrix) -> None:
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g")


def read_manifest(path, midpoint: float = DEFAULT_MIDPOINT) -> Dataset:
    """Load a dataset from a manifest of
    ``odor_id,repeat_index,relative_csv_path,raw_vas_label,split`` lines.

    CSV paths are resolved relative to the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            odor_id, rep, rel, raw, split = (f.strip() for f in row)
            try:
                rep_i = int(rep)
                raw_f = float(raw)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            matrix = load_sample_csv(base / rel)
            samples.append(OdorSample(odor_id, rep_i, matrix, center_label(raw_f, midpoint),
                                      split, raw_vas=raw_f))
    if not samples:
        raise ValueError(f"{path}: manifest lists no samples")
    return Dataset(tuple(samples))


def write_dataset(dataset: Dataset, out_dir, midpoint: float = DEFAULT_MIDPOINT,
                  manifest_name: str = "manifest.csv") -> Path:
    """Write one CSV per sample under ``out_dir/samples`` plus a manifest."""
    out_dir = Path(out_dir)
    sample_dir = out_dir / "samples"
    sample_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / manifest_name
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for s in dataset.samples:
            rel = f"samples/{s.odor_id}_r{s.repeat_index}.csv"
            save_sample_csv(out_dir / rel, s.matrix)
            raw = s.raw_vas if s.raw_vas is not None else s.label + midpoint
            writer.writerow([s.odor_id, s.repeat_index, rel, repr(float(raw)), s.split])
    if dataset.norm_stats is not None:
        dataset.norm_stats.save(out_dir / "norm_stats.csv")
    return manifest
