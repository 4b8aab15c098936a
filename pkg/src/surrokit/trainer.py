"""Momentum-SGD training loop with periodic validation, and accuracy metrics."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import Dataset
from .mlp import GradientSet, MlpModel, TrainConfig, forward, l2_loss, loss_and_grad, sgd_momentum_step

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.05
DEFAULT_T_FLOOR = 1e-3
TRACE_COLUMNS = ("step", "train_l2", "val_l2", "val_accuracy", "val_abs_err", "wall_seconds")


@dataclass(frozen=True)
class TraceRow:
    step: int
    train_l2: float
    val_l2: float
    val_accuracy: float
    val_abs_err: float
    wall_seconds: float


@dataclass
class TrainTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.rows:
                w.writerow([r.step] + [format(getattr(r, c), ".17g") for c in TRACE_COLUMNS[1:]])


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, batch_seed: tuple[int, int], batch_idx: np.ndarray):
        self.step, self.batch_seed, self.batch_idx = step, batch_seed, batch_idx
        super().__init__(f"non-finite loss at step {step}; minibatch drawn from "
                         f"default_rng({list(batch_seed)}) (first rows {batch_idx[:8].tolist()})")


@dataclass(frozen=True)
class Metrics:
    l2: float
    accuracy: float
    mean_abs_err: float


def hit_mask(pred: np.ndarray, truth: np.ndarray, tolerance_rel: float,
             t_floor: float = DEFAULT_T_FLOOR) -> np.ndarray:
    """Per-sample hits: every output within ``tol * max(|truth|, t_floor)``."""
    bound = tolerance_rel * np.maximum(np.abs(truth), t_floor)
    return np.all(np.abs(pred - truth) <= bound, axis=1)


def eval_metrics(model: MlpModel, dataset: Dataset, tolerance_rel: float = DEFAULT_TOLERANCE,
                 t_floor: float = DEFAULT_T_FLOOR) -> Metrics:
    """L2 loss in the model's normalized output units; accuracy and mean
    absolute error against the raw (denormalized) labels."""
    pred = model.predict(dataset.inputs)
    truth = dataset.outputs
    if model.output_norm is not None:
        l2 = l2_loss(model.output_norm.normalize(pred), model.output_norm.normalize(truth))
    else:
        l2 = l2_loss(pred, truth)
    acc = float(np.mean(hit_mask(pred, truth, tolerance_rel, t_floor)))
    return Metrics(l2, acc, float(np.mean(np.abs(pred - truth))))


def batch_indices(cfg: TrainConfig, step: int, n: int) -> np.ndarray:
    return np.random.default_rng([cfg.rng_seed, step]).integers(0, n, size=cfg.batch_size)


def train(model: MlpModel, train_set: Dataset, val_set: Dataset, cfg: TrainConfig,
          tolerance_rel: float = DEFAULT_TOLERANCE) -> tuple[MlpModel, TrainTrace]:
    """Run ``cfg.max_steps`` momentum-SGD steps on a copy of ``model``.

    The model adopts the training split's normalization. Minibatches are drawn
    with replacement from a per-step stream seeded by ``(rng_seed, step)``.
    Trace rows: step 0 (before any update), every ``log_every`` steps, and the
    final step; ``train_l2`` is the mean minibatch loss since the previous row.
    """
    topo = model.topology
    if train_set.input_arity != topo.n_inputs or train_set.output_arity != topo.n_outputs:
        raise ValueError(f"dataset arity {train_set.input_arity}->{train_set.output_arity} "
                         f"does not fit topology {topo}")
    model = model.copy()
    model.input_norm, model.output_norm = train_set.input_norm, train_set.output_norm
    x_train, y_train = train_set.normalized()
    n = len(train_set)
    velocity = GradientSet.zeros_like(model)
    trace = TrainTrace()
    t0 = time.perf_counter()

    def record(step, train_l2):
        m = eval_metrics(model, val_set, tolerance_rel)
        trace.rows.append(TraceRow(step, train_l2, m.l2, m.accuracy, m.mean_abs_err,
                                   time.perf_counter() - t0))
        log.debug("step %d train_l2 %.3e val_l2 %.3e acc %.3f", step, train_l2, m.l2, m.accuracy)

    idx0 = batch_indices(cfg, 1, n)
    record(0, l2_loss(forward(model, x_train[idx0]), y_train[idx0]))
    window: list[float] = []
    for step in range(1, cfg.max_steps + 1):
        idx = batch_indices(cfg, step, n)
        xb, yb = x_train[idx], y_train[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_grad(model, xb, yb)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.arrays()):
            raise TrainingDiverged(step, (cfg.rng_seed, step), idx)
        window.append(loss)
        sgd_momentum_step(model, grads, velocity, cfg)
        if step % cfg.log_every == 0 or step == cfg.max_steps:
            record(step, float(np.mean(window)))
            window = []
    return model, trace
