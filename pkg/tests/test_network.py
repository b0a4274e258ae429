import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apfos import adtape as ad
from apfos import network as N
from apfos.gradcheck import central_diff, rel_error


@pytest.mark.parametrize(
    "sizes,count",
    [((2, 40, 40, 40, 40, 3), 5163), ((2, 1), 3), ((3, 60, 60, 60, 60, 4), 11464)],
)
def test_param_count(sizes, count):
    assert N.param_count(sizes) == count


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=2, max_size=5))
def test_param_count_matches_unpack(sizes):
    theta = np.zeros(N.param_count(sizes))
    layers = N.unpack(theta, sizes)
    assert sum(W.size + B.size for W, B in layers) == theta.size
    for (W, B), n_in, n_out in zip(layers, sizes[:-1], sizes[1:]):
        assert W.shape == (n_out, n_in) and B.shape == (n_out,)


def test_invalid_sizes():
    with pytest.raises(ValueError):
        N.param_count((2,))
    with pytest.raises(ValueError):
        N.param_count((2, 0, 3))


def test_init_is_deterministic_with_zero_biases():
    sizes = (2, 20, 20, 3)
    a, b = N.init_params(sizes, 5), N.init_params(sizes, 5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, N.init_params(sizes, 6))
    for W, B in N.unpack(a, sizes):
        assert np.all(B == 0.0)


def test_init_weights_within_glorot_bounds():
    sizes = (2, 100, 100)
    theta = N.init_params(sizes, 0)
    for (W, _), n_in, n_out in zip(N.unpack(theta, sizes), sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        assert np.all(np.abs(W) <= bound)
        assert np.abs(W).max() > 0.9 * bound  # range actually covered
    assert theta.size > 10_000


def test_zero_weights_output_biases():
    sizes = (2, 5, 3)
    theta = np.zeros(N.param_count(sizes))
    theta[-3:] = [1.0, -2.0, 0.5]
    out = N.forward(theta, sizes, np.random.default_rng(0).random((4, 2)))
    np.testing.assert_array_equal(out, np.tile([1.0, -2.0, 0.5], (4, 1)))


def test_single_linear_layer_rescales_input():
    theta = np.array([1.0, 1.0, 0.0])
    assert N.forward(theta, (2, 1), np.array([0.5, 0.5]))[0, 0] == 0.0


def test_dimension_mismatch():
    sizes = (2, 3, 1)
    with pytest.raises(ValueError, match="2-d input"):
        N.forward(N.init_params(sizes, 0), sizes, np.zeros((4, 3)))
    with pytest.raises(ValueError, match="length"):
        N.forward(np.zeros(3), sizes, np.zeros((4, 2)))


@pytest.mark.parametrize("dim", [2, 3])
def test_jet_gradient_matches_finite_differences(dim):
    sizes = (dim, 8, 8, 2)
    theta = N.init_params(sizes, 1)
    x = np.random.default_rng(2).random((5, dim))
    outs = N.forward_jets(theta, sizes, x, order=1)
    for i in range(len(x)):
        fd = central_diff(lambda p: N.forward(theta, sizes, p.reshape(1, dim))[0, 0], x[i])
        assert rel_error([np.asarray(outs[0].grad[k])[i] for k in range(dim)], fd) < 1e-5


def test_jet_value_equals_plain_forward():
    sizes = (2, 6, 4)
    theta = N.init_params(sizes, 3)
    x = np.random.default_rng(4).random((7, 2))
    plain = N.forward(theta, sizes, x)
    outs = N.forward_jets(theta, sizes, x, order=2)
    np.testing.assert_allclose(np.stack([o.value for o in outs], 1), plain, rtol=0, atol=1e-15)


def test_parameter_gradient_through_jets():
    sizes = (2, 4, 1)
    theta = N.init_params(sizes, 0) + 0.1
    x = np.array([[0.2, 0.9], [0.6, 0.1]])

    def loss(p):
        (u,) = N.forward_jets(p, sizes, x, order=2)
        return ad.mean(ad.square(ad.add(u.hess[0][0], u.hess[1][1])))

    tape = ad.Tape(theta)
    g = tape.backward(loss(tape.params))
    fd = central_diff(lambda p: float(loss(p)), theta)
    assert rel_error(g, fd) < 1e-5


def test_network_model_callable():
    sizes = (2, 3, 3)
    model = N.NetworkModel(sizes, N.init_params(sizes, 0))
    outs = model(np.full((2, 2), 0.5), 1)
    assert len(outs) == model.n_out == 3
    assert outs[0].order == 1
