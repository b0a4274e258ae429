import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apfos import metrics as M

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_identical_fields():
    e = M.errors([1.0, -2.0, 3.0], [1.0, -2.0, 3.0])
    assert e.as_tuple() == (0.0, 0.0, 0.0)


def test_homogeneity():
    exact = np.random.default_rng(0).standard_normal(50)
    e = M.errors(2 * exact, exact)
    assert e.as_tuple() == pytest.approx((1.0, 1.0, 1.0))


def test_constant_offset_max_norm():
    exact = np.sin(np.linspace(0, 3, 100)) * 4.0
    e = M.errors(exact + 0.3, exact)
    assert e.Einf == pytest.approx(0.3 / np.max(np.abs(exact)))


def test_zero_exact_rejected():
    with pytest.raises(ValueError, match="zero"):
        M.errors([1.0, 2.0], [0.0, 0.0])


def test_tiny_and_huge_fields_do_not_underflow():
    exact = np.full(20, 8e-300)
    assert M.errors(np.zeros(20), exact).as_tuple() == pytest.approx((1.0, 1.0, 1.0))
    assert M.abs_norm(np.full(4, 1e200)) == pytest.approx(2e200)


def test_size_mismatch():
    with pytest.raises(ValueError):
        M.errors([1.0], [1.0, 2.0])


@settings(max_examples=40, deadline=None)
@given(arrays(float, 20, elements=finite), arrays(float, 20, elements=finite), st.randoms())
def test_permutation_equivariant(pred, exact, rnd):
    if not np.any(exact):
        exact[0] = 1.0
    perm = list(range(20))
    rnd.shuffle(perm)
    a = M.errors(pred, exact)
    b = M.errors(pred[perm], exact[perm])
    assert a.as_tuple() == pytest.approx(b.as_tuple(), rel=1e-12)
    assert min(a.as_tuple()) >= 0


@settings(max_examples=40, deadline=None)
@given(*(arrays(float, 8, elements=finite) for _ in range(3)))
def test_abs_norm_triangle(a, b, c):
    assert M.abs_norm(a - c) <= M.abs_norm(a - b) + M.abs_norm(b - c) + 1e-9


def test_nearest_node_round_half_down():
    assert M.nearest_node(0.5, 100) == (49, False)
    assert M.nearest_node(0.5, 101) == (50, True)
    assert M.nearest_node(0.0, 100) == (0, True)
    assert M.nearest_node(1.0, 100) == (99, True)


def grid_fields(n=100):
    ax = np.arange(n) / (n - 1)
    X, Z = np.meshgrid(ax, ax, indexing="ij")
    return (X + 2 * Z).ravel(), (X * Z).ravel(), (n, n)


def test_off_node_slice_warns_and_snaps():
    pred, exact, shape = grid_fields(100)
    with pytest.warns(M.SliceWarning, match="nearest node"):
        sl = M.slice_grid(pred, exact, shape, {0: 0.5})
    x_used = 49 / 99
    np.testing.assert_allclose(sl.pred, x_used + 2 * sl.coord)
    np.testing.assert_allclose(sl.exact, x_used * sl.coord)
    assert len(sl.rows()) == 100
    assert sl.fixed[0] == (0.5, x_used)


def test_on_node_slice_silent():
    pred, exact, shape = grid_fields(101)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sl = M.slice_grid(pred, exact, shape, {1: 0.5})
    assert sl.axis == 0
    np.testing.assert_allclose(sl.pred, sl.coord + 1.0)


def test_constant_field_slice():
    shape = (5, 6, 7)
    const = np.full(np.prod(shape), 2.5)
    sl = M.slice_grid(const, const, shape, {0: 0.5, 2: 0.0})
    assert len(sl.coord) == 6
    assert np.all(sl.pred == 2.5)


def test_slice_needs_one_free_axis():
    pred, exact, shape = grid_fields(10)
    with pytest.raises(ValueError, match="free axis"):
        M.slice_grid(pred, exact, shape, {})
    with pytest.raises(ValueError, match="outside"):
        M.slice_grid(pred, exact, shape, {0: 1.5})
