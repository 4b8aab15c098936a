"""Exact reference kernels: Newton-Raphson on quadratics and the truncated
Lennard-Jones pair force with its neighbor-list force sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DERIV_FLOOR = 1e-12
DERIV_NUDGE = 1e-6


@dataclass(frozen=True)
class QuadraticEq:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.a == 0:
            raise ValueError("leading coefficient must be non-zero")

    def __call__(self, x: float) -> float:
        return (self.a * x + self.b) * x + self.c

    def deriv(self, x: float) -> float:
        return 2.0 * self.a * x + self.b

    def discriminant(self) -> float:
        return self.b * self.b - 4.0 * self.a * self.c

    def has_real_root(self) -> bool:
        return self.discriminant() >= 0


@dataclass(frozen=True)
class NewtonConfig:
    epsilon: float = 1e-10
    max_iters: int = 100
    initial_guess: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class NewtonResult:
    root: float
    iterations: int
    converged: bool
    residual: float


def newton_solve(eq: QuadraticEq, cfg: NewtonConfig) -> NewtonResult:
    """Iterate ``x <- x - f(x)/f'(x)`` until a step shorter than ``cfg.epsilon``.

    A vanishing derivative nudges the iterate by ``1e-6*(1+|x|)`` and the
    iteration continues; the nudge counts against ``max_iters``.
    """
    a, b, c = eq.a, eq.b, eq.c
    x = float(cfg.initial_guess)
    for i in range(1, cfg.max_iters + 1):
        d = 2.0 * a * x + b
        if abs(d) < DERIV_FLOOR:
            x += DERIV_NUDGE * (1.0 + abs(x))
            continue
        x_new = x - ((a * x + b) * x + c) / d
        if not math.isfinite(x_new):
            return NewtonResult(x, i, False, abs(eq(x)))
        step = abs(x_new - x)
        x = x_new
        if step < cfg.epsilon:
            return NewtonResult(x, i, True, abs(eq(x)))
    return NewtonResult(x, cfg.max_iters, False, abs(eq(x)))


@dataclass(frozen=True)
class LJParams:
    epsilon_lj: float = 1.0
    sigma: float = 1.0
    r_cut: float | None = None

    def __post_init__(self):
        if not (self.epsilon_lj > 0 and self.sigma > 0):
            raise ValueError("epsilon_lj and sigma must be positive")
        if self.r_cut is None:
            object.__setattr__(self, "r_cut", 2.0 ** (1.0 / 6.0) * self.sigma)
        if not self.r_cut > 0:
            raise ValueError("r_cut must be positive")

    @property
    def r_cut_sq(self) -> float:
        return self.r_cut * self.r_cut


def lj_potential(r: float, p: LJParams) -> float:
    if not r > 0:
        raise ValueError(f"distance must be positive, got {r}")
    if r >= p.r_cut:
        return 0.0
    sr6 = (p.sigma / r) ** 6
    return 4.0 * p.epsilon_lj * (sr6 * sr6 - sr6)


def lj_pair_force(r_sq: float, p: LJParams) -> float:
    """Force divided by distance, from the squared separation (no sqrt)."""
    if not r_sq > 0:
        raise ValueError(f"squared distance must be positive, got {r_sq}")
    if r_sq >= p.r_cut_sq:
        return 0.0
    sr2 = p.sigma * p.sigma / r_sq
    sr6 = sr2 * sr2 * sr2
    return 24.0 * p.epsilon_lj * (2.0 * sr6 * sr6 - sr6) / r_sq


PairForceFn = Callable[[float], float]


class NeighborLists(list):
    """Per-atom neighbor index lists; ``all_pairs`` marks the small-box fallback."""

    def __init__(self, lists, all_pairs: bool = False):
        super().__init__(lists)
        self.all_pairs = all_pairs


@dataclass
class AtomBox:
    positions: np.ndarray
    neighbor_lists: Sequence[Sequence[int]]
    box_length: float

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        n = len(self.positions)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be an (N, 3) array")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        if len(self.neighbor_lists) != n:
            raise ValueError("need one neighbor list per atom")
        for i, nbrs in enumerate(self.neighbor_lists):
            for j in nbrs:
                if not 0 <= j < n or j == i:
                    raise ValueError(f"atom {i}: invalid neighbor index {j}")


def all_pairs_lists(n: int) -> NeighborLists:
    return NeighborLists([[j for j in range(n) if j != i] for i in range(n)], all_pairs=True)


def minimum_image(d: np.ndarray, box_length: float) -> np.ndarray:
    return d - box_length * np.round(d / box_length)


def build_neighbor_lists(positions, box_length: float, r_cut: float, skin: float = 0.3) -> NeighborLists:
    """Full neighbor lists: j is listed for i iff the minimum-image distance is
    ``<= r_cut + skin``. Lists are sorted by index. Boxes too small for an
    unambiguous minimum image fall back to all pairs."""
    pos = np.asarray(positions, dtype=np.float64)
    n = len(pos)
    if skin < 0:
        raise ValueError("skin must be non-negative")
    reach = r_cut + skin
    if box_length <= 2.0 * reach:
        return all_pairs_lists(n)
    pos = pos - box_length * np.floor(pos / box_length)
    reach_sq = reach * reach
    n_cells = int(box_length // reach)
    lists: list[list[int]] = [[] for _ in range(n)]
    if n_cells < 3:
        for i in range(n):
            d = minimum_image(pos - pos[i], box_length)
            r2 = np.einsum("ij,ij->i", d, d)
            lists[i] = [j for j in np.flatnonzero(r2 <= reach_sq).tolist() if j != i]
        return NeighborLists(lists)

    cell_of = np.minimum((pos / (box_length / n_cells)).astype(int), n_cells - 1)
    cells: dict[tuple[int, int, int], list[int]] = {}
    for i, c in enumerate(map(tuple, cell_of)):
        cells.setdefault(c, []).append(i)
    offsets = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]
    for i in range(n):
        cx, cy, cz = cell_of[i]
        cand = []
        for dx, dy, dz in offsets:
            cand += cells.get(((cx + dx) % n_cells, (cy + dy) % n_cells, (cz + dz) % n_cells), [])
        cand = np.array(sorted(j for j in cand if j != i), dtype=int)
        if cand.size:
            d = minimum_image(pos[cand] - pos[i], box_length)
            r2 = np.einsum("ij,ij->i", d, d)
            lists[i] = cand[r2 <= reach_sq].tolist()
    return NeighborLists(lists)


def lj_force_sweep(box: AtomBox, p: LJParams, pair_eval: PairForceFn | None = None) -> np.ndarray:
    """Per-atom forces: for each atom, accumulate ``fpair(d^2) * d`` over its
    neighbors with minimum-image displacement ``d = r_i - r_j``.

    ``pair_eval`` is called once per directed pair and is never guarded by a
    cutoff test here; the exact kernel applies its own cutoff, a surrogate
    absorbs it.
    """
    if pair_eval is None:
        def pair_eval(r_sq):
            return lj_pair_force(r_sq, p)
    L = float(box.box_length)
    pos = box.positions.tolist()
    forces = np.zeros((len(pos), 3))
    for i, nbrs in enumerate(box.neighbor_lists):
        xi, yi, zi = pos[i]
        fx = fy = fz = 0.0
        for j in nbrs:
            xj, yj, zj = pos[j]
            dx = xi - xj
            dy = yi - yj
            dz = zi - zj
            dx -= L * round(dx / L)
            dy -= L * round(dy / L)
            dz -= L * round(dz / L)
            f = pair_eval(dx * dx + dy * dy + dz * dz)
            fx += f * dx
            fy += f * dy
            fz += f * dz
        forces[i] = (fx, fy, fz)
    return forces


def random_box(n_atoms: int, density: float, rng: np.random.Generator,
               min_dist: float = 0.9, max_tries: int = 10_000) -> tuple[np.ndarray, float]:
    """Random non-overlapping positions in a periodic cube of the given number density."""
    box_length = (n_atoms / density) ** (1.0 / 3.0)
    pos = np.empty((n_atoms, 3))
    placed = 0
    tries = 0
    while placed < n_atoms:
        tries += 1
        if tries > max_tries * n_atoms:
            raise RuntimeError(f"could not place {n_atoms} atoms at density {density} "
                               f"with min_dist {min_dist}")
        cand = rng.uniform(0.0, box_length, size=3)
        if placed:
            d = minimum_image(pos[:placed] - cand, box_length)
            if np.min(np.einsum("ij,ij->i", d, d)) < min_dist * min_dist:
                continue
        pos[placed] = cand
        placed += 1
    return pos, box_length
