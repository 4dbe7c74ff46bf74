import itertools
import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fedminimax.core import DimensionError
from fedminimax.geometry import ConstraintSet, diameter, gradient_mapping, is_feasible, project

SETS = [ConstraintSet.simplex(3), ConstraintSet.ball([0.5, -1.0, 0.0], 2.0),
        ConstraintSet.box([-1, 0, -2], [1, 0.5, 2]), ConstraintSet.unconstrained(3)]


def test_simplex_feasible_point_unchanged():
    v = np.array([1 / 3, 1 / 3, 1 / 3])
    assert np.array_equal(project(ConstraintSet.simplex(3), v), v)


def test_simplex_two_points_brute_force():
    # brute force over a fine grid of the 1-simplex
    t = np.linspace(0, 1, 100_001)
    pts = np.stack([t, 1 - t], axis=1)
    best = pts[np.argmin(np.sum((pts - [2.0, 0.0]) ** 2, axis=1))]
    assert np.allclose(best, [1.0, 0.0])
    assert np.allclose(project(ConstraintSet.simplex(2), [2.0, 0.0]), [1.0, 0.0], atol=1e-15)


def test_ball_radial_scaling():
    assert np.allclose(project(ConstraintSet.ball([0, 0], 1.0), [3, 4]), [0.6, 0.8])


def test_box_clips():
    assert project(ConstraintSet.box([0, 0], [1, 1]), [2, -1]).tolist() == [1.0, 0.0]


def test_unconstrained_returns_input():
    v = np.array([3.0, -7.0])
    assert np.array_equal(project(ConstraintSet.unconstrained(2), v), v)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        project(ConstraintSet.simplex(3), [1.0, 0.0])


def test_gradient_mapping_unconstrained_is_gradient():
    g = np.array([0.3, -1.7])
    assert np.array_equal(gradient_mapping(ConstraintSet.unconstrained(2), [5.0, 1.0], g, 0.01), g)


def test_gradient_mapping_blocked_direction():
    # P((2, -1)) = (1, 0) = y, so the mapping vanishes
    out = gradient_mapping(ConstraintSet.simplex(2), [1.0, 0.0], [1.0, -1.0], 1.0)
    assert np.array_equal(out, [0.0, 0.0])


def test_gradient_mapping_zero_gradient():
    out = gradient_mapping(ConstraintSet.simplex(3), [0.2, 0.3, 0.5], [0.0, 0.0, 0.0], 0.5)
    assert np.allclose(out, 0.0, atol=1e-15)


def test_gradient_mapping_needs_positive_step():
    with pytest.raises(ValueError):
        gradient_mapping(ConstraintSet.unconstrained(1), [0.0], [1.0], 0.0)


def test_diameters():
    assert diameter(ConstraintSet.simplex(2)) == math.sqrt(2)
    assert diameter(ConstraintSet.ball([0, 0], 3.0)) == 6.0
    assert diameter(ConstraintSet.box([0, 0], [1, 1])) == math.sqrt(2)
    assert diameter(ConstraintSet.unconstrained(2)) == math.inf


@pytest.mark.parametrize("kw", [dict(kind="simplex", dim=1), dict(kind="ball", center=(0,), radius=0.0),
                                dict(kind="box", lo=(1,), hi=(0,)), dict(kind="cone")])
def test_invalid_sets(kw):
    with pytest.raises(ValueError):
        ConstraintSet(**kw)


def test_roundtrip_dict():
    for s in SETS:
        assert ConstraintSet.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("cset", SETS, ids=lambda s: s.kind)
def test_idempotent_and_nonexpansive(cset):
    gen = np.random.default_rng(5)
    for _ in range(10_000):
        a, b = gen.normal(scale=3.0, size=(2, 3))
        pa, pb = project(cset, a), project(cset, b)
        assert np.array_equal(project(cset, pa), pa)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) * (1 + 1e-12) + 1e-15
        assert is_feasible(cset, pa, tol=1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 9), elements=st.floats(-1e3, 1e3)))
@example(np.full(6, 819.71737318))
def test_simplex_output_feasible(v):
    w = project(ConstraintSet.simplex(v.size), v)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(w >= 0.0)
    assert np.array_equal(project(ConstraintSet.simplex(v.size), w), w)


def test_simplex_ties_are_deterministic():
    v = np.array([0.5, 0.5, 0.5, 0.5])
    assert np.allclose(project(ConstraintSet.simplex(4), v), 0.25)
    assert np.array_equal(project(ConstraintSet.simplex(4), v * 3), project(ConstraintSet.simplex(4), v * 3))


def kkt_oracle(v):
    """Exact projection by enumerating supports (independent of the sort-based method)."""
    n = v.size
    best = None
    for r in range(1, n + 1):
        for S in itertools.combinations(range(n), r):
            w = np.zeros(n)
            idx = list(S)
            w[idx] = v[idx] + (1.0 - v[idx].sum()) / r
            if np.all(w >= -1e-15):
                d = np.sum((w - v) ** 2)
                if best is None or d < best[0]:
                    best = (d, w)
    return best[1]


def test_simplex_matches_support_enumeration():
    gen = np.random.default_rng(2)
    for n in (2, 3, 4, 5):
        for _ in range(200):
            v = gen.normal(scale=2.0, size=n)
            assert np.allclose(project(ConstraintSet.simplex(n), v), kkt_oracle(v), atol=1e-12)
