import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import all_pairs_forces, brute_neighbor_lists, lj_force_from_r, quadratic_roots
from surrokit.kernels import (AtomBox, LJParams, NewtonConfig, QuadraticEq, all_pairs_lists,
                              build_neighbor_lists, lj_force_sweep, lj_pair_force, lj_potential,
                              newton_solve, random_box)

P = LJParams()
RC = 2 ** (1 / 6)


# --- Newton-Raphson ---------------------------------------------------------

def test_quadratic_rejects_degenerate():
    with pytest.raises(ValueError):
        QuadraticEq(0.0, 1.0, 1.0)


@pytest.mark.parametrize("a,b,c,real", [(1, 0, -4, True), (1, 0, 1, False), (1, 2, 1, True)])
def test_has_real_root(a, b, c, real):
    assert QuadraticEq(a, b, c).has_real_root() is real


def test_newton_x2_minus_4_from_3():
    eq = QuadraticEq(1, 0, -4)
    first = newton_solve(eq, NewtonConfig(1e-10, 1, 3.0))
    assert first.root == pytest.approx(13 / 6, rel=1e-15)
    assert not first.converged
    res = newton_solve(eq, NewtonConfig(1e-10, 100, 3.0))
    assert res.converged and abs(res.root - 2) < 1e-10
    assert res.residual < 1e-9


def test_newton_start_at_root():
    res = newton_solve(QuadraticEq(1, 0, -4), NewtonConfig(1e-10, 100, 2.0))
    assert res.root == 2.0 and res.iterations == 1 and res.converged


def test_newton_no_real_root_does_not_converge():
    res = newton_solve(QuadraticEq(1, 0, 1), NewtonConfig(1e-10, 50, 1.0))
    assert not res.converged
    assert res.iterations == 50


def test_newton_zero_derivative_is_nudged():
    # f'(x0) = 0 at the vertex x0 = 0
    res = newton_solve(QuadraticEq(1, 0, -4), NewtonConfig(1e-10, 100, 0.0))
    assert res.converged and abs(abs(res.root) - 2) < 1e-10


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(epsilon=0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iters=0)


@settings(max_examples=300, deadline=None)
@given(a=st.floats(0.5, 5), b=st.floats(-10, 10), c=st.floats(-10, 10), x0=st.floats(-100, 100))
def test_newton_matches_closed_form(a, b, c, x0):
    assume(b * b - 4 * a * c >= 0.1)
    assume(abs(2 * a * x0 + b) > 1e-3)
    eq = QuadraticEq(a, b, c)
    res = newton_solve(eq, NewtonConfig(1e-10, 100, x0))
    assert res.converged and res.iterations <= 100
    assert abs(eq(res.root)) < 1e-6
    nearest = min(quadratic_roots(a, b, c), key=lambda r: abs(r - res.root))
    assert abs(res.root - nearest) < 1e-8


def test_newton_quadratic_convergence():
    eq = QuadraticEq(1, 0, -4)
    x, errors = 3.0, []
    for _ in range(5):
        x = x - eq(x) / eq.deriv(x)
        errors.append(abs(x - 2))
    errors = [e for e in errors if e > 0]
    assert all(e2 < e1 for e1, e2 in zip(errors, errors[1:]))
    # e_{n+1} / e_n^2 stays bounded by 1/(2*root) = 0.25 (plus slack)
    assert all(e2 <= 0.3 * e1 * e1 for e1, e2 in zip(errors, errors[1:]))


# --- Lennard-Jones ------------------------------------------------------------

def test_default_cutoff():
    assert P.r_cut == 2 ** (1 / 6)
    assert LJParams(sigma=2.0).r_cut == 2 ** (1 / 6) * 2.0


def test_potential_values():
    assert lj_potential(1.0, P) == 0.0
    assert lj_potential(RC, P) == 0.0
    assert lj_potential(2.0, P) == 0.0
    assert lj_potential(0.9, P) == pytest.approx(4 * (0.9 ** -12 - 0.9 ** -6), rel=1e-14)
    with pytest.raises(ValueError):
        lj_potential(0.0, P)


def test_pair_force_values():
    assert lj_pair_force(1.0, P) == 24.0
    assert lj_pair_force(P.r_cut_sq, P) == 0.0
    assert lj_pair_force(1.5, P) == 0.0
    with pytest.raises(ValueError):
        lj_pair_force(-1.0, P)


def test_pair_force_continuous_at_cutoff():
    for delta in (1e-4, 1e-6, 1e-8):
        assert abs(lj_pair_force(P.r_cut_sq * (1 - delta), P)) < 1e3 * delta


@settings(max_examples=200, deadline=None)
@given(r=st.floats(0.5, 1.5), eps=st.floats(0.1, 5), sigma=st.floats(0.5, 2))
def test_pair_force_matches_r_formula(r, eps, sigma):
    p = LJParams(eps, sigma)
    r = r * sigma
    expected = lj_force_from_r(r, eps, sigma, p.r_cut)
    assert lj_pair_force(r * r, p) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_pair_force_is_minus_potential_derivative():
    h = 1e-6
    for r in np.linspace(0.9, 1.1, 9):
        dudr = (lj_potential(r + h, P) - lj_potential(r - h, P)) / (2 * h)
        assert lj_pair_force(r * r, P) == pytest.approx(-dudr / r, rel=1e-6)


# --- neighbor lists and force sweep ------------------------------------------

def _box(n, density, seed, skin=0.3):
    pos, length = random_box(n, density, np.random.default_rng(seed))
    return AtomBox(pos, build_neighbor_lists(pos, length, P.r_cut, skin), length)


def test_two_atoms_far_apart():
    pos = np.array([[1.0, 1.0, 1.0], [4.0, 4.0, 4.0]])
    lists = build_neighbor_lists(pos, 10.0, P.r_cut, 0.3)
    assert lists == [[], []] and not lists.all_pairs


def test_neighbor_boundary_inclusive():
    pos = np.array([[1.0, 1.0, 1.0], [1.0 + 1.0, 1.0, 1.0]])
    assert build_neighbor_lists(pos, 10.0, 1.0, 0.0) == [[1], [0]]


def test_small_box_falls_back_to_all_pairs():
    pos = np.random.default_rng(0).uniform(0, 2, size=(5, 3))
    lists = build_neighbor_lists(pos, 2.0, P.r_cut, 0.3)
    assert lists.all_pairs and lists == all_pairs_lists(5)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("density,skin", [(0.5, 0.3), (0.8, 0.0), (0.2, 0.5)])
def test_neighbor_lists_match_brute_force(seed, density, skin):
    pos, length = random_box(50, density, np.random.default_rng(seed))
    got = build_neighbor_lists(pos, length, P.r_cut, skin)
    assert not got.all_pairs
    assert list(got) == brute_neighbor_lists(pos.tolist(), length, P.r_cut + skin)


def test_neighbor_lists_with_unwrapped_positions():
    pos, length = random_box(40, 0.5, np.random.default_rng(9))
    shifted = pos + length * np.random.default_rng(1).integers(-2, 3, size=pos.shape)
    assert build_neighbor_lists(shifted, length, P.r_cut, 0.3) == \
        build_neighbor_lists(pos, length, P.r_cut, 0.3)


def test_atom_box_validation():
    with pytest.raises(ValueError):
        AtomBox(np.zeros((2, 3)), [[0], []], 5.0)
    with pytest.raises(ValueError):
        AtomBox(np.zeros((2, 3)), [[2], []], 5.0)
    with pytest.raises(ValueError):
        AtomBox(np.zeros((2, 3)), [[1]], 5.0)


def test_two_atoms_at_cutoff_feel_nothing():
    box = AtomBox(np.array([[0.0, 0, 0], [RC, 0, 0]]), [[1], [0]], 10.0)
    assert np.all(lj_force_sweep(box, P) == 0)


def test_two_atoms_at_sigma():
    box = AtomBox(np.array([[1.0, 0, 0], [0.0, 0, 0]]), [[1], [0]], 10.0)
    f = lj_force_sweep(box, P)
    # r0 - r1 = (+1, 0, 0) and fpair = 24: atom 0 is pushed away along +x
    np.testing.assert_array_equal(f[0], [24.0, 0, 0])
    np.testing.assert_array_equal(f[1], [-24.0, 0, 0])


def test_two_atoms_across_periodic_boundary():
    box = AtomBox(np.array([[0.2, 0, 0], [9.2, 0, 0]]), [[1], [0]], 10.0)
    f = lj_force_sweep(box, P)
    assert f[0, 0] == pytest.approx(24.0) and f[1, 0] == pytest.approx(-24.0)


def test_equilateral_triangle_net_zero():
    s = 1.05
    pos = np.array([[0, 0, 0], [s, 0, 0], [s / 2, s * math.sqrt(3) / 2, 0]]) + 3.0
    box = AtomBox(pos, all_pairs_lists(3), 10.0)
    f = lj_force_sweep(box, P)
    assert np.all(np.abs(f.sum(axis=0)) < 1e-12)
    assert np.linalg.norm(f[0]) > 1.0


@pytest.mark.parametrize("seed", range(10))
def test_sweep_matches_independent_all_pairs(seed):
    box = _box(50, 0.5, seed)
    ref = all_pairs_forces(box.positions, box.box_length)
    np.testing.assert_allclose(lj_force_sweep(box, P), ref, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_sweep_momentum_conserved(seed):
    box = _box(60, 0.8, seed)
    assert np.all(np.abs(lj_force_sweep(box, P).sum(axis=0)) < 1e-12)


def test_surrogate_pair_eval_sees_every_pair():
    box = _box(40, 0.5, 3, skin=0.5)
    seen = []

    def spy(r_sq):
        seen.append(r_sq)
        return 0.0

    lj_force_sweep(box, P, spy)
    assert len(seen) == sum(len(nb) for nb in box.neighbor_lists)
    assert any(r2 >= P.r_cut_sq for r2 in seen)
