"""Code regions, surrogate bindings, and the accuracy/speedup harness."""
from __future__ import annotations

import csv
import enum
import gc
import logging
import math
import statistics
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .datagen import Dataset
from .kernels import (AtomBox, LJParams, NewtonConfig, QuadraticEq, lj_force_sweep, lj_pair_force,
                      newton_solve)
from .mlp import ActivationKind, MlpModel, Topology, TrainConfig, init_model
from .trainer import DEFAULT_TOLERANCE, TrainTrace, hit_mask, train

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("topology", "train_seconds", "steps", "l2_loss", "eval_seconds", "accuracy",
                  "mean_abs_err", "speedup", "flops_per_call")
MIN_TIMED_SECONDS = 2e-3

NEWTON_TOPOLOGIES = ("3x3x1", "3x5x1", "3x8x1", "3x3x2x1", "3x5x3x1", "3x8x5x1",
                     "3x5x3x2x1", "3x8x5x3x1", "3x11x8x5x1")
# (topology, learning rate)
LJ_TOPOLOGIES = (("1x3x1", 0.005), ("1x5x1", 0.005), ("1x8x1", 0.005),
                 ("1x3x2x1", 0.01), ("1x3x5x1", 0.01), ("1x5x8x1", 0.01))
NEWTON_HIDDEN = ActivationKind.TANH
LJ_HIDDEN = ActivationKind.RELU_TANH
NEWTON_LR = 0.2

KernelFn = Callable[[Sequence[float]], Sequence[float]]


@dataclass(frozen=True)
class RegionSpec:
    name: str
    input_arity: int
    output_arity: int
    original: KernelFn
    description: str = ""

    def run(self, inputs: np.ndarray) -> np.ndarray:
        """Evaluate the original kernel row by row."""
        return np.array([self.original(row) for row in np.atleast_2d(inputs).tolist()],
                        dtype=np.float64).reshape(-1, self.output_arity)


def newton_region(x0: float, epsilon: float = 1e-10, max_iters: int = 100) -> RegionSpec:
    cfg = NewtonConfig(epsilon, max_iters, x0)

    def solve(abc):
        a, b, c = abc
        return (newton_solve(QuadraticEq(a, b, c), cfg).root,)

    return RegionSpec("newton", 3, 1, solve, f"Newton-Raphson root of a*x^2+b*x+c from x0={x0!r}")


def lj_region(p: LJParams | None = None) -> RegionSpec:
    p = p or LJParams()

    def fpair(r_sq):
        return (lj_pair_force(r_sq[0], p),)

    return RegionSpec("lj", 1, 1, fpair, "Lennard-Jones fpair from squared distance")


class KernelSurrogate:
    """Stands in for a model by looping the region's own kernel (timing sanity check)."""

    topology = "kernel"
    flops = 0

    def __init__(self, region: RegionSpec):
        self.region = region

    def predict(self, inputs):
        return self.region.run(inputs)


class Mode(enum.Enum):
    ORIGINAL = "original"
    SURROGATE = "surrogate"
    SHADOW = "shadow"


@dataclass(frozen=True)
class SurrogateBinding:
    """A region paired with a model. Shadow mode keeps a lock-guarded log of
    per-call max absolute deviation, so concurrent callers are safe."""

    region: RegionSpec
    model: MlpModel | KernelSurrogate
    mode: Mode = Mode.SURROGATE
    deviations: list[float] = field(default_factory=list, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, compare=False, repr=False)

    def __post_init__(self):
        topo = getattr(self.model, "topology", None)
        if isinstance(topo, Topology) and (topo.n_inputs != self.region.input_arity
                                           or topo.n_outputs != self.region.output_arity):
            raise ValueError(f"model {topo} does not fit region {self.region.name} "
                             f"({self.region.input_arity}->{self.region.output_arity})")

    def with_mode(self, mode: Mode) -> "SurrogateBinding":
        return SurrogateBinding(self.region, self.model, mode)

    def __call__(self, x) -> np.ndarray:
        return call(self, x)


def call(binding: SurrogateBinding, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != binding.region.input_arity:
        raise ValueError(f"region {binding.region.name} takes {binding.region.input_arity} inputs, "
                         f"got {x.size}")
    if binding.mode is Mode.SURROGATE:
        return binding.model.predict(x[None, :])[0]
    exact = np.asarray(binding.region.original(x.tolist()), dtype=np.float64)
    if binding.mode is Mode.SHADOW:
        approx = binding.model.predict(x[None, :])[0]
        with binding._lock:
            binding.deviations.append(float(np.max(np.abs(approx - exact))))
    return exact


@dataclass(frozen=True)
class EvalReport:
    region: str
    topology: str
    n_calls: int
    accuracy: float
    mean_abs_err: float
    t_original: float
    t_surrogate: float
    speedup: float
    flops_per_call: int


def _timed(fn: Callable[[], object], scale: int) -> float:
    # collector pauses land on whichever call crosses a threshold; keep them out, as timeit does
    enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        t0 = time.perf_counter()
        for _ in range(scale):
            fn()
        return (time.perf_counter() - t0) / scale
    finally:
        if enabled:
            gc.enable()


def time_interleaved(fns: Sequence[Callable[[], object]], repetitions: int) -> list[float]:
    """Median per-call seconds of each callable, timed round-robin so slow
    stretches of machine time hit every callable alike.

    Calls faster than ``MIN_TIMED_SECONDS`` are repeated inside each timing so
    the clock resolution does not dominate.
    """
    if repetitions < 3:
        warnings.warn(f"repetitions={repetitions} raised to 3", stacklevel=2)
        repetitions = 3
    scales = []
    for fn in fns:
        t = _timed(fn, 1)
        scale = 1 if t >= MIN_TIMED_SECONDS else math.ceil(MIN_TIMED_SECONDS / max(t, 1e-9))
        if scale > 1:
            log.info("call takes %.2e s; timing %d calls per repetition", t, scale)
        scales.append(scale)
    samples = [[] for _ in fns]
    for _ in range(repetitions):
        for fn, scale, out in zip(fns, scales, samples):
            out.append(_timed(fn, scale))
    return [statistics.median(t) for t in samples]


def time_pair(fn_a: Callable[[], object], fn_b: Callable[[], object],
              repetitions: int) -> tuple[float, float]:
    if repetitions < 3:
        warnings.warn(f"repetitions={repetitions} raised to 3", stacklevel=2)
        repetitions = 3
    ta, tb = time_interleaved([fn_a, fn_b], repetitions)
    return ta, tb


def _model_name(model) -> str:
    return str(model.topology)


def _model_flops(model) -> int:
    topo = model.topology
    return topo.flops() if isinstance(topo, Topology) else int(getattr(model, "flops", 0))


def _report(region: RegionSpec, model, exact, approx, t_orig: float, t_surr: float,
            tolerance_rel: float) -> EvalReport:
    return EvalReport(
        region=region.name, topology=_model_name(model), n_calls=len(exact),
        accuracy=float(np.mean(hit_mask(approx, exact, tolerance_rel))),
        mean_abs_err=float(np.mean(np.abs(approx - exact))),
        t_original=t_orig, t_surrogate=t_surr, speedup=t_orig / t_surr,
        flops_per_call=_model_flops(model))


def bench_region(binding: SurrogateBinding, inputs, repetitions: int = 5,
                 tolerance_rel: float = DEFAULT_TOLERANCE) -> EvalReport:
    """Time the original kernel (one call per row) against one batched
    surrogate pass over the same rows; accuracy is measured against the
    original outputs."""
    return bench_batches(binding, inputs, [len(np.atleast_2d(inputs))], repetitions,
                         tolerance_rel)[0]


def bench_batches(binding: SurrogateBinding, inputs, sizes: Sequence[int], repetitions: int = 5,
                  tolerance_rel: float = DEFAULT_TOLERANCE) -> list[EvalReport]:
    """``bench_region`` on the leading ``size`` rows of ``inputs`` for each size,
    with every (size, original/surrogate) timing interleaved in one round-robin."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if len(inputs) == 0 or not sizes:
        raise ValueError("empty input batch")
    if min(sizes) < 1 or max(sizes) > len(inputs):
        raise ValueError(f"batch sizes must lie in 1..{len(inputs)}")
    region, model = binding.region, binding.model
    batches = [inputs[:size] for size in sizes]
    fns = []
    for batch in batches:
        fns.append(lambda b=batch: region.run(b))
        fns.append(lambda b=batch: model.predict(b))
    if repetitions < 3:
        warnings.warn(f"repetitions={repetitions} raised to 3", stacklevel=2)
        repetitions = 3
    times = time_interleaved(fns, repetitions)
    return [_report(region, model, region.run(b), model.predict(b), times[2 * i], times[2 * i + 1],
                    tolerance_rel) for i, b in enumerate(batches)]


_SCALAR_ACTS = {
    ActivationKind.IDENTITY: lambda z: z,
    ActivationKind.RELU: lambda z: z if z > 0.0 else 0.0,
    ActivationKind.TANH: math.tanh,
    ActivationKind.RELU_TANH: lambda z: math.tanh(z) if z > 0.0 else 0.0,
}


def pair_adapter(model: MlpModel) -> Callable[[float], float]:
    """Scalar ``r_sq -> fpair`` closure over a 1-in/1-out model, in plain floats,
    for the per-pair calls of ``lj_force_sweep``. No cutoff test."""
    topo = model.topology
    if topo.n_inputs != 1 or topo.n_outputs != 1:
        raise ValueError(f"pair adapter needs a 1-input, 1-output model, got {topo}")
    in_lo, in_span = (0.0, 1.0) if model.input_norm is None else (
        float(model.input_norm.lo[0]), float(model.input_norm.hi[0] - model.input_norm.lo[0]))
    out_lo, out_span = (0.0, 1.0) if model.output_norm is None else (
        float(model.output_norm.lo[0]), float(model.output_norm.hi[0] - model.output_norm.lo[0]))
    layers = [(w.T.tolist(), b.tolist()) for w, b in zip(model.weights, model.biases)]
    hidden, out_act = _SCALAR_ACTS[topo.hidden_activation], _SCALAR_ACTS[topo.output_activation]
    *inner, (w_last, b_last) = layers

    def fpair(r_sq: float) -> float:
        h = [(r_sq - in_lo) / in_span]
        for w_t, b in inner:
            h = [hidden(sum(hk * wk for hk, wk in zip(h, col)) + bj) for col, bj in zip(w_t, b)]
        y = out_act(sum(hk * wk for hk, wk in zip(h, w_last[0])) + b_last[0])
        return y * out_span + out_lo

    return fpair


def bench_lj_sweep(model: MlpModel, box: AtomBox, p: LJParams, repetitions: int = 5,
                   tolerance_rel: float = DEFAULT_TOLERANCE) -> EvalReport:
    """Force-sweep-level comparison: exact pair force vs surrogate adapter over one box.
    Accuracy counts atoms whose three force components all hit."""
    adapter = pair_adapter(model)
    exact = lj_force_sweep(box, p)
    approx = lj_force_sweep(box, p, adapter)
    t_orig, t_surr = time_pair(lambda: lj_force_sweep(box, p),
                               lambda: lj_force_sweep(box, p, adapter), repetitions)
    n_pairs = sum(len(nb) for nb in box.neighbor_lists)
    return EvalReport(
        region="lj", topology=str(model.topology), n_calls=max(n_pairs, 1),
        accuracy=float(np.mean(hit_mask(approx, exact, tolerance_rel))),
        mean_abs_err=float(np.mean(np.abs(approx - exact))),
        t_original=t_orig, t_surrogate=t_surr, speedup=t_orig / t_surr,
        flops_per_call=model.topology.flops())


@dataclass
class SweepEntry:
    topology: str
    seed: int
    train_seconds: float
    steps: int
    l2_loss: float
    report: EvalReport | None
    model: MlpModel | None = None
    trace: TrainTrace | None = None
    error: str | None = None

    def row(self) -> dict[str, object]:
        r = self.report
        nan = float("nan")
        return {
            "topology": self.topology, "train_seconds": self.train_seconds, "steps": self.steps,
            "l2_loss": self.l2_loss,
            "eval_seconds": r.t_surrogate if r else nan,
            "accuracy": r.accuracy if r else nan,
            "mean_abs_err": r.mean_abs_err if r else nan,
            "speedup": r.speedup if r else nan,
            "flops_per_call": r.flops_per_call if r else 0,
        }


def derive_seed(rng_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([rng_seed, index]).generate_state(1)[0])


def sweep_topologies(region: RegionSpec, train_set: Dataset, val_set: Dataset,
                     topologies: Sequence[Topology], configs: Sequence[TrainConfig],
                     rng_seed: int = 0, bench: Callable[[MlpModel], EvalReport] | None = None,
                     repetitions: int = 3) -> list[SweepEntry]:
    """Train each topology from a fresh init and benchmark it.

    Seeds for init and minibatches derive from ``(rng_seed, index)``. The
    default benchmark is ``bench_region`` on the validation inputs. A failed
    training run is recorded on its entry and the sweep moves on.
    """
    if len(topologies) != len(configs):
        raise ValueError("need one TrainConfig per topology")
    if not topologies:
        raise ValueError("empty topology list")
    for topo in topologies:
        if topo.n_inputs != region.input_arity or topo.n_outputs != region.output_arity:
            raise ValueError(f"topology {topo} does not fit region {region.name}")
    if bench is None:
        def bench(model):
            return bench_region(SurrogateBinding(region, model), val_set.inputs, repetitions)
    entries = []
    for i, (topo, cfg) in enumerate(zip(topologies, configs)):
        seed = derive_seed(rng_seed, i)
        cfg = TrainConfig(cfg.learning_rate, cfg.momentum_coeff, cfg.batch_size, cfg.max_steps,
                          seed, cfg.log_every)
        t0 = time.perf_counter()
        try:
            model, trace = train(init_model(topo, seed), train_set, val_set, cfg)
        except (RuntimeError, FloatingPointError) as exc:
            log.warning("training %s failed: %s", topo, exc)
            entries.append(SweepEntry(str(topo), seed, time.perf_counter() - t0, cfg.max_steps,
                                      float("nan"), None, error=str(exc)))
            continue
        train_seconds = time.perf_counter() - t0
        entries.append(SweepEntry(str(topo), seed, train_seconds, cfg.max_steps,
                                  trace.rows[-1].train_l2, bench(model), model, trace))
    return entries


def write_report(entries: Sequence[SweepEntry], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for e in entries:
            row = e.row()
            w.writerow([row["topology"]] + [
                row[c] if isinstance(row[c], (int, str)) else format(row[c], ".17g")
                for c in REPORT_COLUMNS[1:]])


def write_eval_reports(reports: Sequence[EvalReport], path) -> None:
    cols = ("region", "topology", "n_calls", "accuracy", "mean_abs_err", "t_original",
            "t_surrogate", "speedup", "flops_per_call")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in reports:
            w.writerow([getattr(r, c) if isinstance(getattr(r, c), (int, str))
                        else format(getattr(r, c), ".17g") for c in cols])
