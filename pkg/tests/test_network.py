import numpy as np
import pytest

from spectraforge.autodiff import ParamTape
from spectraforge.errors import NonFiniteError
from spectraforge.network import AdamState, NetworkLayout, ParamVector, adam_step, forward, init_xavier


def test_param_count_formula():
    lay = NetworkLayout(2, T=3, M=2, N=80)
    assert lay.n_params == 80 * 2 + 3 * 2 * (80 * 80 + 80) + 80 + 1


def test_xavier_deterministic_and_zero_biases():
    lay = NetworkLayout(2, T=2, M=2, N=10)
    a, b = init_xavier(lay, 7), init_xavier(lay, 7)
    assert a.values.tobytes() == b.values.tobytes()
    for name in lay.offsets:
        if name.startswith("b"):
            np.testing.assert_array_equal(a.view(name), 0.0)


def test_xavier_variance():
    lay = NetworkLayout(2, T=1, M=1, N=80)
    draws = np.concatenate([init_xavier(lay, s).view("W0.0").ravel() for s in range(10)])
    assert draws.var() == pytest.approx(2.0 / 160.0, rel=0.2)


@pytest.mark.parametrize("act", ["identity", "square"])
def test_zero_network_is_zero(act):
    lay = NetworkLayout(2, T=2, M=2, N=4, out_act=act)
    tape = ParamTape()
    out = forward(tape, lay, np.zeros(lay.n_params), np.array([[0.3, 0.2], [-1.0, 4.0]]))
    np.testing.assert_array_equal(out.payload.data, 0.0)


def test_handcrafted_single_neuron():
    lay = NetworkLayout(2, T=1, M=1, N=1)
    pv = ParamVector(lay, np.zeros(lay.n_params))
    w1, w2 = 0.7, -1.2
    pv.view("W_in")[:] = [[w1], [w2]]
    pv.view("W0.0")[:] = 1.0
    pv.view("W_out")[:] = 1.0
    x = np.array([[0.4, 0.1], [-0.3, 0.8]])
    out = forward(ParamTape(), lay, pv, x).payload
    s = w1 * x[:, 0] + w2 * x[:, 1]
    t = np.tanh(s)
    sech2 = 1 - t**2
    np.testing.assert_allclose(out.value, t + s, rtol=1e-14)
    np.testing.assert_allclose(out.grad, np.outer([w1, w2], sech2 + 1), rtol=1e-14)
    h = -2 * t * sech2
    np.testing.assert_allclose(out.hess, np.stack([w1 * w1 * h, w1 * w2 * h, w2 * w2 * h]), rtol=1e-13)


def test_zero_blocks_reduce_to_linear_map():
    lay = NetworkLayout(2, T=3, M=2, N=5)
    rng = np.random.default_rng(0)
    pv = ParamVector(lay, np.zeros(lay.n_params))
    pv.view("W_in")[:] = rng.normal(size=(2, 5))
    pv.view("W_out")[:] = rng.normal(size=(5, 1))
    pv.view("b_out")[:] = 0.25
    x = rng.normal(size=(4, 2))
    out = forward(ParamTape(), lay, pv, x).payload.value
    np.testing.assert_allclose(out, (x @ pv.view("W_in") @ pv.view("W_out")).ravel() + 0.25, rtol=1e-14)


def test_forward_jets_match_fd():
    lay = NetworkLayout(3, T=2, M=2, N=6)
    theta = init_xavier(lay, 4)
    x = np.array([[0.2, -0.1, 0.4]])
    j = forward(ParamTape(), lay, theta, x).payload

    def f(p):
        return forward(ParamTape(), lay, theta, p[None], jet=False).value[0]

    h = 1e-5
    eye = np.eye(3)
    fd = np.array([(f(x[0] + h * e) - f(x[0] - h * e)) / (2 * h) for e in eye])
    np.testing.assert_allclose(j.grad[:, 0], fd, rtol=1e-5, atol=1e-9)
    lap = sum((f(x[0] + h * e) - 2 * f(x[0]) + f(x[0] - h * e)) / h**2 for e in eye)
    assert j.laplacian()[0] == pytest.approx(lap, rel=1e-4, abs=1e-6)


def test_forward_is_pure():
    lay = NetworkLayout(2, T=1, M=2, N=4)
    theta = init_xavier(lay, 1)
    before = theta.values.copy()
    x = np.array([[0.1, 0.2]])
    a = forward(ParamTape(), lay, theta, x).payload.data
    b = forward(ParamTape(), lay, theta, x).payload.data
    assert a.tobytes() == b.tobytes()
    assert theta.values.tobytes() == before.tobytes()


def test_layout_mismatch():
    lay = NetworkLayout(2, T=1, M=1, N=3)
    with pytest.raises(ValueError):
        forward(ParamTape(), lay, np.zeros(lay.n_params + 1), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        forward(ParamTape(), lay, np.zeros(lay.n_params), np.zeros((1, 3)))


def test_adam_zero_gradient_fixed_point():
    p = np.array([1.0, -2.0])
    q, st = adam_step(p, np.zeros(2), AdamState.zeros(2), 1e-3)
    np.testing.assert_array_equal(q, p)
    assert st.t == 1


def test_adam_sign_property():
    p, st = np.array([0.0]), AdamState.zeros(1)
    trail = []
    for _ in range(50):
        p, st = adam_step(p, np.array([0.3]), st, 1e-2)
        trail.append(p[0])
    assert np.all(np.diff(trail) < 0)


def test_adam_quadratic_bowl():
    p, st = np.array([1.0]), AdamState.zeros(1)
    for _ in range(2000):
        p, st = adam_step(p, 2 * p, st, 1e-2)
    assert abs(p[0]) < 1e-3


def test_adam_rejects_nonfinite():
    with pytest.raises(NonFiniteError):
        adam_step(np.zeros(1), np.array([np.nan]), AdamState.zeros(1), 1e-3)
    with pytest.raises(ValueError):
        adam_step(np.zeros(1), np.zeros(1), AdamState.zeros(1), 0.0)
