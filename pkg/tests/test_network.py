import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fd_grad, rel_err
from tempsel import network
from tempsel.errors import InvalidInputError
from tempsel.network import NetworkSpec


def test_param_count():
    spec = NetworkSpec((8, 64, 1))
    assert spec.num_params == 9 * 64 + 65 * 1
    spec = NetworkSpec((3, 5, 4, 2))
    assert spec.num_params == 4 * 5 + 6 * 4 + 5 * 2


@pytest.mark.parametrize("widths", [(3,), (3, 0, 1), (0, 2, 1)])
def test_invalid_specs(widths):
    with pytest.raises(InvalidInputError):
        NetworkSpec(widths)


@given(st.lists(st.integers(1, 6), min_size=2, max_size=5), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_flatten_unflatten_roundtrip(widths, seed):
    spec = NetworkSpec(tuple(widths))
    theta = np.random.default_rng(seed).standard_normal(spec.num_params)
    layers = network.unflatten(spec, theta)
    assert [W.shape for W, _ in layers] == [(o, i) for i, o in zip(widths[:-1], widths[1:])]
    np.testing.assert_array_equal(network.flatten(layers), theta)


def test_layout_is_weights_then_bias():
    spec = NetworkSpec((2, 3, 1))
    theta = np.arange(spec.num_params, dtype=float)
    (W1, b1), (W2, b2) = network.unflatten(spec, theta)
    np.testing.assert_array_equal(W1, np.arange(6).reshape(3, 2))
    np.testing.assert_array_equal(b1, [6, 7, 8])
    np.testing.assert_array_equal(W2, [[9, 10, 11]])
    np.testing.assert_array_equal(b2, [12])
    sl = spec.layer_slices()
    assert sl[0] == slice(0, 9) and sl[1] == slice(9, 13)


def test_init_deterministic_and_zero_bias():
    spec = NetworkSpec((8, 64, 64, 3))
    a, b = network.init_params(spec, 7), network.init_params(spec, 7)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, network.init_params(spec, 8))
    for W, bias in network.unflatten(spec, a):
        assert np.all(bias == 0)


def test_init_he_variance():
    spec = NetworkSpec((100, 64, 64, 1))
    theta = network.init_params(spec, 0)
    for (W, _), fan_in in zip(network.unflatten(spec, theta)[:2], (100, 64)):
        assert abs(W.var() / (2.0 / fan_in) - 1) < 0.2


def test_zero_params_give_zero_output(rng):
    spec = NetworkSpec((4, 6, 2))
    out = network.forward(spec, np.zeros(spec.num_params), rng.standard_normal((5, 4)))
    np.testing.assert_array_equal(out, 0.0)


def test_affine_when_relu_inactive(rng):
    # positive weights, biases and inputs keep every hidden preactivation positive: the net is affine
    spec = NetworkSpec((3, 4, 2))
    W1, b1 = rng.uniform(0.1, 1, (4, 3)), rng.uniform(0.1, 1, 4)
    W2, b2 = rng.standard_normal((2, 4)), rng.standard_normal(2)
    theta = network.flatten([(W1, b1), (W2, b2)])
    x = rng.uniform(0.1, 1, 3)
    np.testing.assert_allclose(network.forward(spec, theta, x), W2 @ (W1 @ x + b1) + b2, rtol=1e-14)


def test_single_layer_affine(rng):
    spec = NetworkSpec((3, 2))
    W, b = rng.standard_normal((2, 3)), rng.standard_normal(2)
    x = rng.standard_normal(3)
    np.testing.assert_allclose(network.forward(spec, network.flatten([(W, b)]), x), W @ x + b, rtol=1e-14)


def test_hand_evaluated_231():
    spec = NetworkSpec((2, 3, 1))
    W1 = [[0.5, -1.0], [2.0, 0.25], [-0.75, 0.5]]
    b1 = [0.1, -0.2, 0.3]
    W2 = [[1.5, -0.5, 2.0]]
    b2 = [0.05]
    theta = network.flatten([(np.array(W1), np.array(b1)), (np.array(W2), np.array(b2))])
    x = [0.4, -0.6]
    # hidden preactivations by hand
    h = [0.5 * 0.4 - 1.0 * -0.6 + 0.1, 2.0 * 0.4 + 0.25 * -0.6 - 0.2, -0.75 * 0.4 + 0.5 * -0.6 + 0.3]
    h = [max(v, 0.0) for v in h]
    expected = 1.5 * h[0] - 0.5 * h[1] + 2.0 * h[2] + 0.05
    assert abs(network.forward(spec, theta, x)[0] - expected) < 1e-12


def test_batch_and_single_agree(rng):
    spec = NetworkSpec((3, 5, 2))
    theta = rng.standard_normal(spec.num_params)
    X = rng.standard_normal((4, 3))
    batch = network.forward(spec, theta, X)
    for i in range(4):
        np.testing.assert_allclose(network.forward(spec, theta, X[i]), batch[i], rtol=1e-12, atol=1e-14)


def test_forward_dimension_mismatch(rng):
    spec = NetworkSpec((3, 5, 2))
    with pytest.raises(InvalidInputError):
        network.forward(spec, np.zeros(spec.num_params), np.zeros(4))
    with pytest.raises(InvalidInputError):
        network.forward(spec, np.zeros(spec.num_params + 1), np.zeros(3))


def test_vjp_zero_cotangent(rng):
    spec = NetworkSpec((3, 5, 2))
    g = network.vjp(spec, rng.standard_normal(spec.num_params), rng.standard_normal(3), np.zeros(2))
    np.testing.assert_array_equal(g, 0.0)


def test_vjp_linear_layer(rng):
    spec = NetworkSpec((3, 1))
    x = rng.standard_normal(3)
    g = network.vjp(spec, rng.standard_normal(spec.num_params), x, np.ones(1))
    np.testing.assert_allclose(g, np.append(x, 1.0))


def test_vjp_dimension_mismatch(rng):
    spec = NetworkSpec((3, 5, 2))
    with pytest.raises(InvalidInputError):
        network.vjp(spec, np.zeros(spec.num_params), np.zeros(3), np.zeros(3))


def test_relu_subgradient_at_zero_is_zero():
    spec = NetworkSpec((1, 1, 1))
    # hidden preactivation is exactly 0 -> no gradient flows to the first layer
    theta = network.flatten([(np.array([[1.0]]), np.array([0.0])), (np.array([[1.0]]), np.array([0.0]))])
    g = network.vjp(spec, theta, np.array([0.0]), np.ones(1))
    np.testing.assert_array_equal(g, [0.0, 0.0, 0.0, 1.0])


def random_vjp_instance(rng):
    depth = int(rng.integers(1, 4))
    widths = tuple(int(w) for w in rng.integers(1, 7, size=depth + 1))
    spec = NetworkSpec((int(rng.integers(1, 6)),) + widths)
    theta = rng.standard_normal(spec.num_params)
    X = rng.standard_normal((int(rng.integers(1, 5)), spec.input_dim))
    cot = rng.standard_normal((len(X), spec.output_dim))
    return spec, theta, X, cot


def vjp_fd_error(spec, theta, X, cot):
    f = lambda t: float(np.sum(cot * network.forward(spec, t, X)))
    return rel_err(network.vjp(spec, theta, X, cot), fd_grad(f, theta))


def test_vjp_matches_finite_differences(rng):
    errs = [vjp_fd_error(*random_vjp_instance(rng)) for _ in range(100)]
    assert max(errs) < 1e-6


def test_softmax_shift_invariance_composition(rng):
    from tempsel.model import tempered_softmax

    spec = NetworkSpec((3, 4, 5))
    theta = rng.standard_normal(spec.num_params)
    X = rng.standard_normal((6, 3))
    layers = network.unflatten(spec, theta)
    W, b = layers[-1]
    shifted = network.flatten(layers[:-1] + [(W, b + 3.7)])  # adds a constant to every logit
    np.testing.assert_allclose(tempered_softmax(network.forward(spec, shifted, X), 2.0),
                               tempered_softmax(network.forward(spec, theta, X), 2.0), atol=1e-12)
