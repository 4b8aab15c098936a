"""Training data for the surrogates: sample kernel inputs, label them with the
exact kernels, split, normalize and persist as CSV."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import LJParams, NewtonConfig, QuadraticEq, lj_pair_force, newton_solve

log = logging.getLogger(__name__)

DEFAULT_COEFF_RANGES = ((0.5, 5.0), (-10.0, 10.0), (-10.0, 10.0))
DEFAULT_DISC_FLOOR = 0.1
DEFAULT_X0_RANGE = (1.0, 100.0)
# 102,400 train / 3,072 validation
DEFAULT_TRAIN_FRACTION = 102_400 / 105_472


@dataclass(frozen=True, eq=False)
class NormSpec:
    """Per-component min-max scaling of one side (inputs or outputs) to [0, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).ravel()
        hi = np.asarray(self.hi, dtype=np.float64).ravel()
        if lo.shape != hi.shape:
            raise ValueError("min/max widths differ")
        if not np.all(hi > lo):
            raise ValueError("every component needs max > min")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def fit(cls, values: np.ndarray) -> "NormSpec":
        """Column min/max; a constant column gets a unit span so the map stays invertible."""
        values = np.atleast_2d(values)
        lo = values.min(axis=0)
        hi = values.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        return cls(lo, hi)

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo)

    def denormalize(self, y):
        return np.asarray(y, dtype=np.float64) * (self.hi - self.lo) + self.lo

    def __eq__(self, other):
        return (isinstance(other, NormSpec) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))


@dataclass
class Dataset:
    """Raw (unnormalized) samples plus the scaling used to feed a network."""

    inputs: np.ndarray
    outputs: np.ndarray
    input_norm: NormSpec | None = None
    output_norm: NormSpec | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=np.float64))
        if len(self.inputs) == 0:
            raise ValueError("dataset has no samples")
        if len(self.inputs) != len(self.outputs):
            raise ValueError("input/output row counts differ")
        if self.input_norm is None:
            self.input_norm = NormSpec.fit(self.inputs)
        if self.output_norm is None:
            self.output_norm = NormSpec.fit(self.outputs)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def input_arity(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_arity(self) -> int:
        return self.outputs.shape[1]

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        return self.input_norm.normalize(self.inputs), self.output_norm.normalize(self.outputs)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.outputs[idx], self.input_norm, self.output_norm,
                       dict(self.meta))

    def __eq__(self, other):
        return (isinstance(other, Dataset) and np.array_equal(self.inputs, other.inputs)
                and np.array_equal(self.outputs, other.outputs)
                and self.input_norm == other.input_norm and self.output_norm == other.output_norm
                and self.meta == other.meta)


class DatasetGenerationError(RuntimeError):
    pass


def gen_newton_dataset(n: int, coeff_ranges=DEFAULT_COEFF_RANGES, x0: float | None = None,
                       rng_seed: int = 0, epsilon: float = 1e-10, max_iters: int = 100,
                       disc_floor: float = DEFAULT_DISC_FLOOR,
                       x0_range=DEFAULT_X0_RANGE) -> Dataset:
    """Random quadratics labelled with the Newton root reached from one shared x0.

    If ``x0`` is None the dataset draws its own x0 uniformly from ``x0_range``
    (always the first draw of the seeded stream); either way every sample uses
    the same x0 so the label is a function of (a, b, c) alone.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    drawn = draw_x0(rng, x0_range)
    x0 = drawn if x0 is None else float(x0)
    cfg = NewtonConfig(epsilon=epsilon, max_iters=max_iters, initial_guess=x0)
    (a_lo, a_hi), (b_lo, b_hi), (c_lo, c_hi) = coeff_ranges
    inputs, outputs = [], []
    attempts = rejected = 0
    while len(inputs) < n:
        attempts += 1
        a, b, c = rng.uniform(a_lo, a_hi), rng.uniform(b_lo, b_hi), rng.uniform(c_lo, c_hi)
        if a == 0 or b * b - 4.0 * a * c < disc_floor:
            rejected += 1
        else:
            res = newton_solve(QuadraticEq(a, b, c), cfg)
            if res.converged:
                inputs.append((a, b, c))
                outputs.append((res.root,))
            else:
                rejected += 1
        if attempts >= 100 and rejected > 0.9 * attempts:
            raise DatasetGenerationError(
                f"rejection rate {rejected / attempts:.1%} after {attempts} draws; "
                f"coefficient ranges {coeff_ranges} rarely give real, convergent roots")
    meta = {"region": "newton", "x0": repr(x0), "attempts": str(attempts), "rejected": str(rejected)}
    return Dataset(np.array(inputs), np.array(outputs), meta=meta)


def draw_x0(rng: np.random.Generator, x0_range=DEFAULT_X0_RANGE) -> float:
    return float(rng.uniform(*x0_range))


def default_lj_r_sq_range(p) -> tuple[float, float]:
    """(0.9 sigma)^2 up to (1.2 r_cut)^2."""
    return (0.9 * p.sigma) ** 2, (1.2 * p.r_cut) ** 2


def gen_lj_dataset(n: int, p=None, r_sq_range=None, rng_seed: int = 0) -> Dataset:
    """Squared pair distances drawn uniformly from ``r_sq_range``, labelled with fpair.

    Samples past the cutoff keep their exact zero label so the network learns
    the cutoff branch too.
    """
    p = p or LJParams()
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = r_sq_range or default_lj_r_sq_range(p)
    if not 0 < lo < hi:
        raise ValueError(f"empty or non-positive r^2 range ({lo}, {hi})")
    if hi > (1.2 * p.r_cut) ** 2 * (1 + 1e-12):
        raise ValueError("r^2 range exceeds (1.2 r_cut)^2")
    rng = np.random.default_rng(rng_seed)
    r_sq = rng.uniform(lo, hi, size=n)
    labels = np.array([lj_pair_force(float(x), p) for x in r_sq])
    meta = {"region": "lj", "epsilon_lj": repr(p.epsilon_lj), "sigma": repr(p.sigma),
            "r_cut": repr(p.r_cut)}
    return Dataset(r_sq[:, None], labels[:, None], meta=meta)


def split(dataset: Dataset, train_fraction: float, rng_seed: int = 0) -> tuple[Dataset, Dataset]:
    """Shuffle split; scaling is refit on the training side and shared by both."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(dataset)
    n_train = int(round(train_fraction * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"split of {n} samples at {train_fraction} leaves a side empty")
    perm = np.random.default_rng(rng_seed).permutation(n)
    tr, va = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    in_norm = NormSpec.fit(dataset.inputs[tr])
    out_norm = NormSpec.fit(dataset.outputs[tr])
    meta = dict(dataset.meta)
    train = Dataset(dataset.inputs[tr], dataset.outputs[tr], in_norm, out_norm, meta)
    val = Dataset(dataset.inputs[va], dataset.outputs[va], in_norm, out_norm, dict(meta))
    return train, val


class DatasetParseError(ValueError):
    def __init__(self, path, row: int, message: str):
        self.path, self.row = path, row
        super().__init__(f"{path}: row {row}: {message}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(dataset: Dataset, path) -> None:
    """CSV of raw samples plus ``<path>.norm`` (scaling) and ``<path>.meta`` sidecars."""
    path = Path(path)
    k, m = dataset.input_arity, dataset.output_arity
    header = [f"in_{i}" for i in range(k)] + [f"out_{j}" for j in range(m)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y in zip(dataset.inputs, dataset.outputs):
            w.writerow([_fmt(v) for v in x] + [_fmt(v) for v in y])
    norm_lines = [
        "in_min " + " ".join(map(_fmt, dataset.input_norm.lo)),
        "in_max " + " ".join(map(_fmt, dataset.input_norm.hi)),
        "out_min " + " ".join(map(_fmt, dataset.output_norm.lo)),
        "out_max " + " ".join(map(_fmt, dataset.output_norm.hi)),
    ]
    Path(str(path) + ".norm").write_text("\n".join(norm_lines) + "\n", encoding="utf-8")
    if dataset.meta:
        meta_lines = [f"{key}={val}" for key, val in sorted(dataset.meta.items())]
        Path(str(path) + ".meta").write_text("\n".join(meta_lines) + "\n", encoding="utf-8")


def read_dataset(path) -> Dataset:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetParseError(path, 0, "no samples")
    header = rows[0]
    k = sum(1 for h in header if h.startswith("in_"))
    m = sum(1 for h in header if h.startswith("out_"))
    expected = [f"in_{i}" for i in range(k)] + [f"out_{j}" for j in range(m)]
    if header != expected or k == 0 or m == 0:
        raise DatasetParseError(path, 0, f"bad header {header!r}")
    if len(rows) == 1:
        raise DatasetParseError(path, 0, "no samples")
    data = np.empty((len(rows) - 1, k + m))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != k + m:
            raise DatasetParseError(path, r, f"expected {k + m} cells, found {len(row)}")
        try:
            data[r - 1] = [float(c) for c in row]
        except ValueError as exc:
            raise DatasetParseError(path, r, f"non-numeric cell ({exc})") from None

    in_norm = out_norm = None
    norm_path = Path(str(path) + ".norm")
    if norm_path.exists():
        fields = {}
        for ln in norm_path.read_text(encoding="utf-8").splitlines():
            if ln.strip():
                key, *vals = ln.split()
                fields[key] = np.array([float(v) for v in vals])
        try:
            in_norm = NormSpec(fields["in_min"], fields["in_max"])
            out_norm = NormSpec(fields["out_min"], fields["out_max"])
        except (KeyError, ValueError) as exc:
            raise DatasetParseError(norm_path, 0, f"bad normalization sidecar ({exc})") from None
        if in_norm.lo.size != k or out_norm.lo.size != m:
            raise DatasetParseError(norm_path, 0, "normalization width does not match header")
    meta = {}
    meta_path = Path(str(path) + ".meta")
    if meta_path.exists():
        for ln in meta_path.read_text(encoding="utf-8").splitlines():
            if "=" in ln:
                key, _, val = ln.partition("=")
                meta[key.strip()] = val.strip()
    return Dataset(data[:, :k], data[:, k:], in_norm, out_norm, meta)
