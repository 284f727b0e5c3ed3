"""Correlation with human medians, machine/human ratio and pleasant/unpleasant accuracy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError
from .pop_model import PopNetwork
from .signal_model import Dataset

DEFAULT_NEUTRAL_HALF_WIDTH = 5.0


def pearson(x, y) -> float:
    """Sample Pearson correlation. Raises DegenerateInputError on a constant vector."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("pearson needs at least two points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("pearson received non-finite values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateInputError("pearson is undefined for a constant vector")
    dx = x - x.mean()
    dy = y - y.mean()
    r = np.sum(dx * dy) / math.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    return float(min(1.0, max(-1.0, r)))


def machine_human_ratio(r_machine: float, r_human_human: float) -> float:
    """Machine correlation as a percentage of the human-human correlation."""
    if not r_human_human > 0:
        raise ValueError(f"human-human correlation must be positive, got {r_human_human}")
    return 100.0 * r_machine / r_human_human


def binary_classify(pairs, neutral_half_width: float = DEFAULT_NEUTRAL_HALF_WIDTH):
    """Accuracy of the ``prediction > 0`` rule on odors outside the neutral band.

    ``pairs`` holds ``(prediction, centered_human_label)``; odors with
    ``|label| <= neutral_half_width`` are dropped. Returns ``(accuracy, n_used)``.
    """
    if neutral_half_width < 0:
        raise ValueError("neutral_half_width must be >= 0")
    used = correct = 0
    for pred, label in pairs:
        if abs(label) <= neutral_half_width:
            continue
        used += 1
        correct += bool(pred > 0) == bool(label > 0)
    if used == 0:
        raise DegenerateInputError("every odor falls inside the neutral band")
    return float(correct / used), used


@dataclass
class EvalReport:
    pearson_r: float
    n_odors: int
    machine_human_ratio_pct: float | None = None
    binary_accuracy: float | None = None
    n_binary: int = 0
    per_odor: list[tuple[str, float, float]] = field(default_factory=list)

    def summary_line(self) -> str:
        ratio = "" if self.machine_human_ratio_pct is None else (
            f"{round(self.machine_human_ratio_pct):d}% ({self.machine_human_ratio_pct:.4f})"
        )
        acc = "" if self.binary_accuracy is None else repr(self.binary_accuracy)
        return (f"pearson_r={self.pearson_r!r} n_odors={self.n_odors} "
                f"machine_human_ratio={ratio} binary_accuracy={acc} n_binary={self.n_binary}")

    def write(self, out_dir) -> None:
        """``report.csv`` per odor, ``scatter.csv`` for plotting, ``summary.txt``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "report.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["odor_id", "prediction", "human_median"])
            for odor_id, pred, human in self.per_odor:
                w.writerow([odor_id, repr(pred), repr(human)])
        with open(out_dir / "scatter.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["prediction", "human_median"])
            for _, pred, human in self.per_odor:
                w.writerow([repr(pred), repr(human)])
        (out_dir / "summary.txt").write_text(self.summary_line() + "\n")


def odor_predictions(network: PopNetwork, dataset: Dataset):
    """``(odor_ids, median predictions, human medians)`` in first-appearance order.

    All samples go through one batched forward pass.
    """
    x, y = dataset.arrays()
    preds = network.predict_batch(x)
    by_odor: dict[str, list[int]] = {}
    for i, s in enumerate(dataset.samples):
        by_odor.setdefault(s.odor_id, []).append(i)
    ids = list(by_odor)
    machine = np.array([np.median(preds[idx]) for idx in by_odor.values()])
    human = np.array([np.median(y[idx]) for idx in by_odor.values()])
    return ids, machine, human


def evaluate(network: PopNetwork, test_set: Dataset, human_human_r: float | None = None,
             neutral_half_width: float | None = DEFAULT_NEUTRAL_HALF_WIDTH) -> EvalReport:
    if len(test_set) == 0:
        raise ValueError("empty test set")
    ids, machine, human = odor_predictions(network, test_set)
    r = pearson(machine, human)
    report = EvalReport(r, len(ids), per_odor=list(zip(ids, machine.tolist(), human.tolist())))
    if human_human_r is not None:
        report.machine_human_ratio_pct = machine_human_ratio(r, human_human_r)
    if neutral_half_width is not None:
        try:
            report.binary_accuracy, report.n_binary = binary_classify(
                zip(machine, human), neutral_half_width
            )
        except DegenerateInputError:
            report.binary_accuracy, report.n_binary = None, 0
    return report
