import math

import numpy as np
import pytest

from dsqil import nets
from dsqil.nets import MlpParams, MlpSpec

from conftest import assert_grads_close, finite_difference_grad


def zero_params(spec):
    return MlpParams(
        [np.zeros((o, i)) for i, o in zip(spec.layer_widths[:-1], spec.layer_widths[1:])],
        [np.zeros(o) for o in spec.layer_widths[1:]],
    )


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((3,))
    with pytest.raises(ValueError):
        MlpSpec((3, 0, 1))
    with pytest.raises(ValueError):
        MlpSpec((3, 2), hidden_activation="gelu")
    with pytest.raises(ValueError):
        MlpSpec((3, 2), output_activation="tanh")


def test_forward_zero_net_identity_output():
    spec = MlpSpec((3, 5, 2), "relu", "identity")
    out = nets.forward(spec, zero_params(spec), np.array([1.0, -2.0, 0.5]))
    assert np.array_equal(out, np.zeros(2))


def test_forward_zero_net_sigmoid_output():
    spec = MlpSpec((3, 5, 2), "tanh", "sigmoid")
    out = nets.forward(spec, zero_params(spec), np.array([3.0, 0.0, -1.0]))
    assert np.array_equal(out, np.full(2, 0.5))


def test_forward_matches_independent_evaluator(rng):
    # straight-line re-evaluation of the affine + activation chain
    spec = MlpSpec((2, 4, 1), "relu", "identity")
    params = nets.init_params(spec, rng)
    x = rng.uniform(-1, 1, size=2)

    h = list(x)
    for layer in range(2):
        w, b = params.weights[layer], params.biases[layer]
        nxt = []
        for row in range(w.shape[0]):
            z = b[row]
            for col in range(w.shape[1]):
                z += w[row, col] * h[col]
            nxt.append(max(z, 0.0) if layer == 0 else z)
        h = nxt
    assert np.allclose(nets.forward(spec, params, x), h, rtol=0, atol=1e-12)


def test_forward_sigmoid_matches_independent_evaluator(rng):
    spec = MlpSpec((3, 4, 2), "tanh", "sigmoid")
    params = nets.init_params(spec, rng)
    x = rng.uniform(-1, 1, size=3)

    h = list(x)
    for layer in range(2):
        w, b = params.weights[layer], params.biases[layer]
        nxt = []
        for row in range(w.shape[0]):
            z = b[row]
            for col in range(w.shape[1]):
                z += w[row, col] * h[col]
            nxt.append(math.tanh(z) if layer == 0 else 1.0 / (1.0 + math.exp(-z)))
        h = nxt
    assert np.allclose(nets.forward(spec, params, x), h, rtol=0, atol=1e-12)


def test_forward_deterministic(rng):
    spec = MlpSpec((4, 8, 3), "relu", "identity")
    params = nets.init_params(spec, rng)
    x = rng.uniform(-1, 1, size=4)
    a = nets.forward(spec, params, x)
    b = nets.forward(spec, params, x)
    assert np.array_equal(a, b)


def test_forward_rejects_bad_width(rng):
    spec = MlpSpec((4, 2))
    params = nets.init_params(spec, rng)
    with pytest.raises(ValueError):
        nets.forward(spec, params, np.zeros(3))


def test_backward_zero_output_grad(rng):
    spec = MlpSpec((3, 6, 2), "tanh", "identity")
    params = nets.init_params(spec, rng)
    x = rng.uniform(-1, 1, size=3)
    grad, in_grad = nets.backward(spec, params, x, np.zeros(2))
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grad.arrays())
    assert np.array_equal(in_grad, np.zeros(3))


def test_backward_one_by_one_net():
    # d(wx+b)/dw = x and d/db = 1, scaled by the upstream gradient
    spec = MlpSpec((1, 1), "relu", "identity")
    params = MlpParams([np.array([[1.7]])], [np.array([0.3])])
    g, in_grad = nets.backward(spec, params, np.array([2.5]), np.array([4.0]))
    assert g.weights[0][0, 0] == pytest.approx(4.0 * 2.5, abs=0)
    assert g.biases[0][0] == pytest.approx(4.0, abs=0)
    assert in_grad[0] == pytest.approx(4.0 * 1.7, abs=0)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
@pytest.mark.parametrize("activations", [("relu", "identity"), ("tanh", "sigmoid")])
def test_backward_matches_finite_differences(seed, activations):
    hidden_act, out_act = activations
    rng = np.random.default_rng(seed)
    spec = MlpSpec((3, 8, 2), hidden_act, out_act)
    params = nets.init_params(spec, rng)
    x = rng.uniform(-1, 1, size=3)
    probe = rng.uniform(-1, 1, size=2)  # fixed projection makes the loss scalar

    def loss():
        return float(nets.forward(spec, params, x) @ probe)

    analytic, _ = nets.backward(spec, params, x, probe)
    assert_grads_close(analytic, finite_difference_grad(loss, params))


def test_backward_batched_matches_sum_of_singles(rng):
    spec = MlpSpec((3, 5, 2), "tanh", "identity")
    params = nets.init_params(spec, rng)
    xs = rng.uniform(-1, 1, size=(4, 3))
    gs = rng.uniform(-1, 1, size=(4, 2))
    batch_grad, batch_in = nets.backward(spec, params, xs, gs)
    total = nets.zeros_like_params(params)
    for i in range(4):
        g, gi = nets.backward(spec, params, xs[i], gs[i])
        for t, s in zip(total.arrays(), g.arrays()):
            t += s
        assert np.allclose(batch_in[i], gi, atol=1e-14)
    for b, t in zip(batch_grad.arrays(), total.arrays()):
        assert np.allclose(b, t, atol=1e-12)


def test_adam_zero_gradient_is_identity(rng):
    spec = MlpSpec((2, 3, 1))
    params = nets.init_params(spec, rng)
    before = params.copy()
    state = nets.adam_init(params)
    nets.adam_step(params, nets.zeros_like_params(params), state, lr=1e-2)
    for a, b in zip(params.arrays(), before.arrays()):
        assert np.array_equal(a, b)
    assert state.step == 1


def test_adam_first_step_displacement(rng):
    # hand evaluation of the recurrences at t=1:
    # m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
    spec = MlpSpec((2, 3, 1))
    params = nets.init_params(spec, rng)
    before = params.copy()
    state = nets.adam_init(params)
    g_value = 0.37
    grad = nets.zeros_like_params(params)
    for g in grad.arrays():
        g += g_value
    lr = 1e-3
    nets.adam_step(params, grad, state, lr=lr)
    expected = lr * g_value / (abs(g_value) + state.eps)
    for a, b in zip(params.arrays(), before.arrays()):
        assert np.allclose(b - a, expected, rtol=1e-12, atol=1e-16)
    assert expected == pytest.approx(lr, rel=1e-6)


def test_adam_descends_scalar_quadratic():
    # direct re-evaluation of the loss after each of two steps
    spec = MlpSpec((1, 1))
    params = MlpParams([np.array([[5.0]])], [np.array([0.0])])
    state = nets.adam_init(params)

    def loss():
        return (params.weights[0][0, 0] - 3.0) ** 2

    losses = [loss()]
    for _ in range(2):
        grad = MlpParams([np.array([[2.0 * (params.weights[0][0, 0] - 3.0)]])],
                         [np.array([0.0])])
        nets.adam_step(params, grad, state, lr=0.1)
        losses.append(loss())
    assert losses[1] < losses[0]
    assert losses[2] < losses[1]


def test_adam_rejects_nonfinite_gradient(rng):
    spec = MlpSpec((2, 2))
    params = nets.init_params(spec, rng)
    grad = nets.zeros_like_params(params)
    grad.weights[0][0, 0] = np.nan
    with pytest.raises(ValueError):
        nets.adam_step(params, grad, nets.adam_init(params), lr=1e-3)


def test_polyak_rate_one_copies(rng):
    spec = MlpSpec((3, 4, 2))
    target = nets.init_params(spec, rng)
    online = nets.init_params(spec, rng)
    nets.polyak_update(target, online, 1.0)
    for t, o in zip(target.arrays(), online.arrays()):
        assert np.array_equal(t, o)


def test_polyak_rate_zero_is_noop(rng):
    spec = MlpSpec((3, 4, 2))
    target = nets.init_params(spec, rng)
    online = nets.init_params(spec, rng)
    before = target.copy()
    nets.polyak_update(target, online, 0.0)
    for t, b in zip(target.arrays(), before.arrays()):
        assert np.array_equal(t, b)


def test_polyak_scalar_value():
    # rate 5e-3 moving a 0 target toward a 1 online value
    target = MlpParams([np.array([[0.0]])], [np.array([0.0])])
    online = MlpParams([np.array([[1.0]])], [np.array([1.0])])
    nets.polyak_update(target, online, 5e-3)
    assert target.weights[0][0, 0] == 0.005
    assert target.biases[0][0] == 0.005


def test_polyak_affine_in_rate(rng):
    spec = MlpSpec((3, 4, 2))
    for rate in (0.3, 5e-3, 0.99):
        target = nets.init_params(spec, rng)
        online = nets.init_params(spec, rng)
        expected = [t + rate * (o - t)
                    for t, o in zip(target.copy().arrays(), online.arrays())]
        nets.polyak_update(target, online, rate)
        for t, e in zip(target.arrays(), expected):
            assert np.array_equal(t, e)


def test_polyak_shape_mismatch(rng):
    a = nets.init_params(MlpSpec((2, 2)), rng)
    b = nets.init_params(MlpSpec((2, 3)), rng)
    with pytest.raises(ValueError):
        nets.polyak_update(a, b, 0.5)


def test_init_bounds(rng):
    spec = MlpSpec((9, 16, 4))
    params = nets.init_params(spec, rng)
    for fan_in, w, b in zip(spec.layer_widths[:-1], params.weights, params.biases):
        bound = 1.0 / np.sqrt(fan_in)
        assert np.all(np.abs(w) <= bound)
        assert np.all(np.abs(b) <= bound)


def test_checkpoint_round_trip_exact(rng, tmp_path):
    spec = MlpSpec((5, 7, 3), "tanh", "sigmoid")
    params = nets.init_params(spec, rng)
    path = tmp_path / "net.json"
    nets.save_checkpoint(path, spec, params, extra={"kind": "test"})
    spec2, params2, extra = nets.load_checkpoint(path)
    assert spec2 == spec
    assert extra == {"kind": "test"}
    for a, b in zip(params.arrays(), params2.arrays()):
        assert np.array_equal(a, b)
