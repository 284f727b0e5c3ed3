"""Raw dataset -> network-ready dataset.

Order: truncate, then uniform or gradient-driven column selection, then
per-sensor normalization. Both the schedule and the normalization statistics
come from the training split only and are applied unchanged to every split.
"""

from __future__ import annotations

from dataclasses import replace

from .signal_model import (
    Dataset,
    apply_normalization,
    fit_normalization,
    truncate,
    uniform_indices,
)
from .subsample import DEFAULT_THRESHOLD, SamplingSchedule, apply_schedule, schedule_from_matrices

MODES = ("uniform", "nonuniform")


def fit_schedule(dataset: Dataset, mode: str = "uniform", width: int = 250,
                 threshold: float = DEFAULT_THRESHOLD) -> SamplingSchedule:
    """Column schedule for already-truncated matrices, from the training split."""
    train = [s.matrix for s in dataset.samples if s.split == "train"]
    if not train:
        raise ValueError("no training-split samples to fit a schedule on")
    if mode == "uniform":
        return SamplingSchedule(uniform_indices(train[0].shape[1], width), float("nan"))
    if mode == "nonuniform":
        return schedule_from_matrices(train, threshold)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def preprocess(dataset: Dataset, mode: str = "uniform", keep_seconds: int | None = 500,
               width: int = 250, threshold: float = DEFAULT_THRESHOLD):
    """Returns ``(processed_dataset, schedule)``; the dataset carries its NormStats."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    dataset.shape  # noqa: B018 - raw matrices must agree before truncation
    if keep_seconds is not None:
        dataset = dataset.map_matrices(lambda m: truncate(m, keep_seconds))
    schedule = fit_schedule(dataset, mode, width, threshold)
    dataset = dataset.map_matrices(lambda m: apply_schedule(m, schedule))
    stats = fit_normalization(dataset)
    normalized = dataset.map_matrices(lambda m: apply_normalization(m, stats))
    return replace(normalized, norm_stats=stats), schedule
