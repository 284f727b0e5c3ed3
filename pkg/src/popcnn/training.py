"""Momentum SGD with a staged learning-rate schedule, odor-level splits and
repeated-run experiments.

Update rule, per parameter array::

    v <- momentum * v - lr * (g + weight_decay * theta)   # decay on weights only
    theta <- theta + v

Targets are divided by ``target_scale`` during training (the head layer is
rescaled on entry and exit to match), so the optimizer sees unit-range
regression targets while the network outside ``train`` predicts in label
units. Reported losses are in label units.

The learning rate starts at ``lr_initial`` and is divided by ``lr_divisor``
whenever training loss plateaus, never dropping below ``lr_final``. A plateau
at the floor ends training.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .evaluation import odor_predictions, pearson
from .pop_model import PopConfig, PopNetwork, build
from .signal_model import Dataset

log = logging.getLogger(__name__)

PLATEAU_REL_IMPROVEMENT = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 14
    momentum: float = 0.8
    lr_initial: float = 0.01
    lr_final: float = 0.0001
    lr_divisor: float = 10.0
    plateau_patience: int = 25
    weight_decay: float = 1e-4
    max_epochs: int = 2000
    target_scale: float = 15.0
    seed: int = 0

    def validate(self) -> None:
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0 < self.lr_final <= self.lr_initial:
            raise ConfigError("need 0 < lr_final <= lr_initial")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr_divisor <= 1:
            raise ConfigError("lr_divisor must exceed 1")
        if self.plateau_patience < 1 or self.max_epochs < 1:
            raise ConfigError("plateau_patience and max_epochs must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not self.target_scale > 0:
            raise ConfigError("target_scale must be positive")


@dataclass
class OptimizerState:
    velocities: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params])


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    val_correlation: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.loss)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "lr", "val_correlation"])
            for i, (loss, lr, r) in enumerate(zip(self.loss, self.lr, self.val_correlation)):
                w.writerow([i + 1, repr(loss), repr(lr), "" if math.isnan(r) else repr(r)])


def sgd_step(params, grads, state: OptimizerState, lr: float, momentum: float,
             weight_decay: float = 0.0, decay_mask=None) -> None:
    """In-place momentum update of ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.velocities):
        raise ValueError("params, grads and velocities differ in count")
    if decay_mask is None:
        decay_mask = [True] * len(params)
    for p, g, v, decay in zip(params, grads, state.velocities, decay_mask):
        if p.shape != np.shape(g) or p.shape != v.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {np.shape(g)}, "
                             f"velocity {v.shape}")
        step = g + weight_decay * p if decay and weight_decay else g
        v *= momentum
        v -= lr * step
        p += v


def lr_schedule_step(current_lr: float, plateau_detected: bool, config: TrainConfig) -> float:
    if not plateau_detected:
        return current_lr
    return max(current_lr / config.lr_divisor, config.lr_final)


class PlateauDetector:
    """Flags a plateau after ``patience`` epochs without a relative improvement
    above 1e-4 on the best loss so far; the counter restarts after each flag."""

    def __init__(self, patience: int, rel_improvement: float = PLATEAU_REL_IMPROVEMENT):
        self.patience = patience
        self.rel_improvement = rel_improvement
        self.best = math.inf
        self.stale = 0

    def update(self, loss: float) -> bool:
        if loss < self.best * (1.0 - self.rel_improvement):
            self.best = loss
            self.stale = 0
            return False
        self.stale += 1
        if self.stale >= self.patience:
            self.stale = 0
            return True
        return False


def _validation_r(network: PopNetwork, val_set: Dataset | None) -> float:
    if val_set is None or len(val_set) == 0:
        return math.nan
    _, machine, human = odor_predictions(network, val_set)
    try:
        return pearson(machine, human)
    except (DegenerateInputError, ValueError):
        return math.nan


def train(network: PopNetwork, train_set: Dataset, val_set: Dataset | None = None,
          config: TrainConfig = TrainConfig()):
    """Fit ``network`` in place; returns ``(network, history)``.

    Mini-batches come from a seeded permutation each epoch; the last batch of
    an epoch may be short. Reported epoch loss is the sample-weighted mean of
    the batch losses.
    """
    config.validate()
    if len(train_set) == 0:
        raise ValueError("empty training set")
    x, y = train_set.arrays()
    if x.shape[2:] != network.input_shape:
        raise ValueError(
            f"training matrices are {x.shape[2]}x{x.shape[3]}, network expects "
            f"{network.input_shape[0]}x{network.input_shape[1]}"
        )
    scale = config.target_scale
    y = y / scale
    network.head.weights /= scale
    network.head.bias /= scale
    try:
        history = _fit(network, x, y, val_set, config)
    finally:
        network.head.weights *= scale
        network.head.bias *= scale
    return network, history


def _fit(network: PopNetwork, x, y, val_set, config: TrainConfig) -> TrainHistory:
    params = network.parameters()
    mask = network.decay_mask()
    state = OptimizerState.zeros_like(params)
    rng = np.random.default_rng(config.seed)
    plateau = PlateauDetector(config.plateau_patience)
    history = TrainHistory()
    lr = config.lr_initial
    n = len(y)
    unit = config.target_scale ** 2
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = network.loss_and_grads(x[idx], y[idx])
            sgd_step(params, grads, state, lr, config.momentum, config.weight_decay, mask)
            total += loss * len(idx)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise FloatingPointError(f"training diverged at epoch {epoch + 1}")
        history.loss.append(epoch_loss * unit)
        history.lr.append(lr)
        # correlation is scale-free, so the rescaled head does not matter here
        history.val_correlation.append(_validation_r(network, val_set))
        if plateau.update(epoch_loss):
            if lr <= config.lr_final:
                log.debug("stopping at epoch %d: plateau at the final learning rate", epoch + 1)
                break
            lr = lr_schedule_step(lr, True, config)
    return history


def random_split(dataset: Dataset, n_train_odors: int, seed: int):
    """Split by odor so all repeats of an odor land on the same side."""
    ids = dataset.odor_ids()
    if not 1 <= n_train_odors < len(ids):
        raise ValueError(f"n_train_odors must be in [1, {len(ids) - 1}], got {n_train_odors}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    train_ids = {ids[i] for i in perm[:n_train_odors]}
    val_ids = [i for i in ids if i not in train_ids]
    return dataset.select_odors(train_ids), dataset.select_odors(val_ids)


@dataclass
class RunSummary:
    n_train_odors: int
    correlations: list[float]

    def _finite(self):
        return np.array([r for r in self.correlations if math.isfinite(r)])

    @property
    def mean(self) -> float:
        f = self._finite()
        return float(f.mean()) if f.size else math.nan

    @property
    def median(self) -> float:
        f = self._finite()
        return float(np.median(f)) if f.size else math.nan

    @property
    def std(self) -> float:
        f = self._finite()
        return float(f.std()) if f.size else math.nan

    def row(self) -> dict:
        f = self._finite()
        return {
            "n_train_odors": self.n_train_odors,
            "k_runs": len(self.correlations),
            "mean_r": self.mean,
            "median_r": self.median,
            "std_r": self.std,
            "min_r": float(f.min()) if f.size else math.nan,
            "max_r": float(f.max()) if f.size else math.nan,
        }


def single_run(dataset: Dataset, n_train_odors: int, run_seed: int,
               pop_config: PopConfig, train_config: TrainConfig) -> float:
    """One split/init/train cycle; returns the final validation correlation."""
    tr, val = random_split(dataset, n_train_odors, run_seed)
    net = build(replace(pop_config, seed=run_seed))
    train(net, tr, None, replace(train_config, seed=run_seed))
    return _validation_r(net, val)


def repeated_runs(dataset: Dataset, n_train_odors: int, k_runs: int,
                  pop_config: PopConfig = PopConfig(),
                  train_config: TrainConfig = TrainConfig()) -> RunSummary:
    """``k_runs`` independent splits and initializations, run ``i`` seeded with
    ``train_config.seed + i``. Runs whose validation correlation is undefined
    record NaN and are left out of the aggregates."""
    if k_runs < 1:
        raise ValueError("k_runs must be >= 1")
    rs = []
    for i in range(k_runs):
        r = single_run(dataset, n_train_odors, train_config.seed + i, pop_config, train_config)
        log.info("run %d/%d n_train=%d r=%.4f", i + 1, k_runs, n_train_odors, r)
        rs.append(r)
    return RunSummary(n_train_odors, rs)


def write_runs(summary: RunSummary, out_dir, base_seed: int) -> None:
    out_dir = Path(out_dir)
    with open(out_dir / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "seed", "val_correlation"])
        for i, r in enumerate(summary.correlations):
            w.writerow([i, base_seed + i, "" if math.isnan(r) else repr(r)])
    row = summary.row()
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([v if isinstance(v, int) else repr(v) for v in row.values()])
