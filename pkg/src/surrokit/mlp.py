"""Minimal fully-connected network: forward pass, backprop and momentum SGD.

Matrices are plain ``float64`` numpy arrays in row-major layout; weights of
layer ``l`` have shape ``(size_l, size_{l+1})`` so a batch multiplies from the
left (``x @ W``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import NormSpec

MODEL_HEADER = "surrokit-model v1"


class ActivationKind(enum.Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"
    RELU_TANH = "relu_tanh"  # tanh(max(x, 0))

    @classmethod
    def parse(cls, text: str) -> "ActivationKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown activation {text!r} (expected one of {names})") from None


def activate(kind: ActivationKind, z: np.ndarray) -> np.ndarray:
    if kind is ActivationKind.IDENTITY:
        return z
    if kind is ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if kind is ActivationKind.TANH:
        return np.tanh(z)
    return np.tanh(np.maximum(z, 0.0))


def activate_grad(kind: ActivationKind, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation at pre-activation ``z`` (``a`` is its output)."""
    if kind is ActivationKind.IDENTITY:
        return np.ones_like(z)
    if kind is ActivationKind.RELU:
        return (z > 0.0).astype(np.float64)
    if kind is ActivationKind.TANH:
        return 1.0 - a * a
    return np.where(z > 0.0, 1.0 - a * a, 0.0)


@dataclass(frozen=True)
class Topology:
    layer_sizes: tuple[int, ...]
    hidden_activation: ActivationKind = ActivationKind.TANH
    output_activation: ActivationKind = ActivationKind.IDENTITY

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("topology needs at least an input and an output layer")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {self}")

    @classmethod
    def parse(cls, text: str, hidden_activation=ActivationKind.TANH,
              output_activation=ActivationKind.IDENTITY) -> "Topology":
        """Parse ``"3x5x3x1"`` style strings."""
        tokens = text.strip().lower().split("x")
        sizes = []
        for tok in tokens:
            if not tok.isdigit():
                raise ValueError(f"bad layer size {tok!r} in topology {text!r}")
            sizes.append(int(tok))
        return cls(tuple(sizes), hidden_activation, output_activation)

    def __str__(self) -> str:
        return "x".join(str(s) for s in self.layer_sizes)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def flops(self) -> int:
        """Forward-pass flops per sample.

        A multiply-add per edge, one activation per non-input node, and one
        rescale per output node (3x5x3x1 -> 66 + 9 + 1 = 76).
        """
        s = self.layer_sizes
        macs = sum(2 * a * b for a, b in zip(s[:-1], s[1:]))
        return macs + sum(s[1:]) + s[-1]


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum_coeff: float = 0.9
    batch_size: int = 200
    max_steps: int = 5000
    rng_seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum_coeff < 1.0:
            raise ValueError("momentum_coeff must lie in [0, 1)")
        for name in ("batch_size", "max_steps", "log_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be unsigned")


@dataclass
class MlpModel:
    topology: Topology
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_norm: NormSpec | None = None
    output_norm: NormSpec | None = None

    def __post_init__(self):
        sizes = self.topology.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("weights/biases count must equal layer count - 1")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l}: shapes {w.shape}/{b.shape} do not match {self.topology}")

    def copy(self) -> "MlpModel":
        return MlpModel(self.topology, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.input_norm, self.output_norm)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Map raw inputs to raw outputs: normalize, forward, denormalize."""
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if self.input_norm is not None:
            x = self.input_norm.normalize(x)
        y = forward(self, x)
        if self.output_norm is not None:
            y = self.output_norm.denormalize(y)
        return y

    def __eq__(self, other) -> bool:
        if not isinstance(other, MlpModel) or self.topology != other.topology:
            return False
        same = all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters()))
        return same and self.input_norm == other.input_norm and self.output_norm == other.output_norm


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "GradientSet":
        return cls([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_model(topology: Topology, rng_seed: int, input_norm: NormSpec | None = None,
               output_norm: NormSpec | None = None) -> MlpModel:
    """Xavier-uniform weights, zero biases."""
    rng = np.random.default_rng(rng_seed)
    sizes = topology.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(topology, weights, biases, input_norm, output_norm)


def _affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Explicit broadcast-and-reduce instead of BLAS: each output row depends only
    # on its input row, with a fixed summation order, so batched and per-row
    # evaluation agree bit for bit.
    return (x[:, :, None] * w[None, :, :]).sum(axis=1) + b


def _check_batch(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.topology.n_inputs:
        raise ValueError(f"batch shape {batch.shape} does not match model input size "
                         f"{model.topology.n_inputs}")
    return batch


def _forward_trace(model: MlpModel, x: np.ndarray):
    zs, activations = [], [x]
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = _affine(activations[-1], w, b)
        kind = model.topology.output_activation if l == last else model.topology.hidden_activation
        zs.append(z)
        activations.append(activate(kind, z))
    return zs, activations


def forward(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Network output for every row of ``batch`` (in normalized units)."""
    x = _check_batch(model, batch)
    return _forward_trace(model, x)[1][-1]


def l2_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Squared error summed over output dims and averaged over samples."""
    pred = np.atleast_2d(pred)
    target = np.atleast_2d(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.shape[0] == 0:
        raise ValueError("empty batch")
    return float(np.sum((pred - target) ** 2) / pred.shape[0])


def backward(model: MlpModel, batch_in: np.ndarray, batch_target: np.ndarray) -> GradientSet:
    """Gradient of ``l2_loss(forward(model, batch_in), batch_target)``."""
    return loss_and_grad(model, batch_in, batch_target)[1]


def loss_and_grad(model: MlpModel, batch_in: np.ndarray,
                  batch_target: np.ndarray) -> tuple[float, GradientSet]:
    x = _check_batch(model, batch_in)
    y = np.asarray(batch_target, dtype=np.float64)
    if y.shape != (x.shape[0], model.topology.n_outputs):
        raise ValueError(f"target shape {y.shape} does not match batch/model")
    zs, acts = _forward_trace(model, x)
    n = x.shape[0]
    last = len(model.weights) - 1
    grad_w: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * len(model.biases)  # type: ignore[list-item]
    delta = 2.0 * (acts[-1] - y) / n
    for l in range(last, -1, -1):
        kind = model.topology.output_activation if l == last else model.topology.hidden_activation
        delta = delta * activate_grad(kind, zs[l], acts[l + 1])
        grad_w[l] = acts[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ model.weights[l].T
    return l2_loss(acts[-1], y), GradientSet(grad_w, grad_b)


def sgd_momentum_step(model: MlpModel, grads: GradientSet, velocity: GradientSet,
                      cfg: TrainConfig) -> tuple[MlpModel, GradientSet]:
    """Classical momentum: ``v <- mu*v - lr*g; p <- p + v``. Updates in place."""
    for p, g, v in zip(model.parameters(), grads.arrays(), velocity.arrays()):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError("gradient/velocity shapes do not match model")
        v *= cfg.momentum_coeff
        v -= cfg.learning_rate * g
        p += v
    return model, velocity


class ModelParseError(ValueError):
    def __init__(self, path, line: int, field: str, message: str):
        self.path, self.line, self.field = path, line, field
        super().__init__(f"{path}:{line}: {field}: {message}")


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def save_model(model: MlpModel, path) -> None:
    topo = model.topology
    lines = [MODEL_HEADER, str(topo), f"{topo.hidden_activation.value} {topo.output_activation.value}"]
    for w, b in zip(model.weights, model.biases):
        lines += [_fmt(w), _fmt(b)]
    for tag, norm in (("input", model.input_norm), ("output", model.output_norm)):
        if norm is not None:
            lines += [f"norm_{tag}_min {_fmt(norm.lo)}", f"norm_{tag}_max {_fmt(norm.hi)}"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _floats(path, lineno: int, field: str, text: str, expected: int) -> np.ndarray:
    try:
        vals = np.array([float(t) for t in text.split()], dtype=np.float64)
    except ValueError as exc:
        raise ModelParseError(path, lineno, field, str(exc)) from None
    if vals.size != expected:
        raise ModelParseError(path, lineno, field, f"expected {expected} values, found {vals.size}")
    if not np.all(np.isfinite(vals)):
        raise ModelParseError(path, lineno, field, "non-finite value")
    return vals


def load_model(path) -> MlpModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise ModelParseError(path, 1, "header", f"expected {MODEL_HEADER!r}")
    if len(lines) < 3:
        raise ModelParseError(path, len(lines) + 1, "topology", "file truncated")
    try:
        sizes = Topology.parse(lines[1]).layer_sizes
    except ValueError as exc:
        raise ModelParseError(path, 2, "topology", str(exc)) from None
    acts = lines[2].split()
    if len(acts) != 2:
        raise ModelParseError(path, 3, "activations", "expected '<hidden> <output>'")
    try:
        topo = Topology(sizes, ActivationKind.parse(acts[0]), ActivationKind.parse(acts[1]))
    except ValueError as exc:
        raise ModelParseError(path, 3, "activations", str(exc)) from None

    n_layers = len(sizes) - 1
    body = lines[3:]
    param_lines = [ln for ln in body if not ln.startswith("norm_")]
    if len(param_lines) != 2 * n_layers or any(ln.startswith("norm_") for ln in body[:2 * n_layers]):
        raise ModelParseError(path, 4, "weights",
                              f"topology {topo} needs {2 * n_layers} parameter lines, "
                              f"found {len(param_lines)}")
    weights, biases = [], []
    for l in range(n_layers):
        wline, bline = 4 + 2 * l, 5 + 2 * l
        w = _floats(path, wline, f"weights[{l}]", lines[wline - 1], sizes[l] * sizes[l + 1])
        b = _floats(path, bline, f"biases[{l}]", lines[bline - 1], sizes[l + 1])
        weights.append(w.reshape(sizes[l], sizes[l + 1]))
        biases.append(b)

    norms: dict[str, np.ndarray] = {}
    for offset, ln in enumerate(body[2 * n_layers:]):
        lineno = 4 + 2 * n_layers + offset
        key, _, rest = ln.partition(" ")
        width = sizes[0] if key.startswith("norm_input") else sizes[-1]
        if key not in ("norm_input_min", "norm_input_max", "norm_output_min", "norm_output_max"):
            raise ModelParseError(path, lineno, key or "<empty>", "unknown field")
        if key in norms:
            raise ModelParseError(path, lineno, key, "duplicate field")
        norms[key] = _floats(path, lineno, key, rest, width)

    def pick(tag):
        lo, hi = norms.get(f"norm_{tag}_min"), norms.get(f"norm_{tag}_max")
        if lo is None and hi is None:
            return None
        if lo is None or hi is None:
            raise ModelParseError(path, len(lines), f"norm_{tag}", "min/max must both be present")
        try:
            return NormSpec(lo, hi)
        except ValueError as exc:
            raise ModelParseError(path, len(lines), f"norm_{tag}", str(exc)) from None

    return MlpModel(topo, weights, biases, pick("input"), pick("output"))
