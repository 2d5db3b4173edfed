import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectraforge import jet as jt


def test_coord_seeds():
    a = jt.coord(0, [0.3, 0.4])
    assert a.value == 0.3
    np.testing.assert_array_equal(a.grad, [1, 0])
    np.testing.assert_array_equal(a.hess, 0)

    b = jt.coord(2, [1.0, 2.0, 5.0])
    assert b.value == 5
    np.testing.assert_array_equal(b.grad, [0, 0, 1])
    np.testing.assert_array_equal(b.hess, 0)

    c = jt.coord(1, [0.0, 0.0])
    assert c.value == 0
    np.testing.assert_array_equal(c.grad, [0, 1])


def test_product_rule():
    x, y = jt.coord(0, [2.0, 3.0]), jt.coord(1, [2.0, 3.0])
    p = jt.mul(x, y)
    assert p.value == 6
    np.testing.assert_array_equal(p.grad, [3, 2])
    H = p.hess_matrix()
    assert H[0, 1] == 1 and H[1, 0] == 1
    assert H[0, 0] == 0 and H[1, 1] == 0


def test_add_negation_is_zero():
    j = jt.tanh(jt.mul(jt.coord(0, [0.7, -0.2]), jt.coord(1, [0.7, -0.2])))
    np.testing.assert_array_equal(jt.add(j, -j).data, 0.0)


def test_div_identity():
    x = jt.coord(0, [2.0, 0.0])
    q = jt.div(jt.mul(x, x), x)
    np.testing.assert_allclose(q.data, x.data, atol=1e-15)


def test_tanh_at_origin():
    t = jt.tanh(jt.coord(0, [0.0, 0.8]))
    assert t.value == 0
    np.testing.assert_allclose(t.grad, [1, 0])
    np.testing.assert_allclose(t.hess, 0, atol=1e-16)


def test_square_polynomial():
    s = jt.square(jt.coord(0, [3.0, 1.0]))
    assert s.value == 9
    np.testing.assert_array_equal(s.grad, [6, 0])
    np.testing.assert_array_equal(np.diag(s.hess_matrix()), [2, 0])


def test_tanh_first_derivative_vs_fd():
    j = jt.tanh(jt.add(jt.coord(0, [1.0, 0.0]), 0.0))
    assert j.value == pytest.approx(0.76159, abs=1e-5)
    step = 1e-6
    fd = (math.tanh(1 + step) - math.tanh(1 - step)) / (2 * step)
    assert j.grad[0] == pytest.approx(fd, rel=1e-8)
    assert j.grad[0] == pytest.approx(0.41997, abs=1e-5)


def test_min_max_rules():
    x = jt.coord(0, [5.0, 1.0])
    m = jt.minimum(jt.constant(2.0, 2), x)
    np.testing.assert_array_equal(m.data, jt.constant(2.0, 2).data)
    t = jt.maximum(x, x)
    np.testing.assert_array_equal(t.data, x.data)
    j = jt.mul(x, 0.6)  # value 3
    c = jt.maximum(0.0, jt.minimum(1.0, j))
    np.testing.assert_array_equal(c.data, jt.constant(1.0, 2).data)


def test_tie_goes_to_first_argument():
    x = jt.coord(0, [1.0, 1.0])
    y = jt.coord(1, [1.0, 1.0])
    np.testing.assert_array_equal(jt.minimum(x, y).grad, [1, 0])
    np.testing.assert_array_equal(jt.minimum(y, x).grad, [0, 1])


@pytest.mark.parametrize("d", [2, 3])
def test_laplacian_of_norm_squared(d):
    pts = np.random.default_rng(0).normal(size=(7, d))
    xs = jt.coords(pts)
    r2 = xs[0] * xs[0]
    for c in xs[1:]:
        r2 = r2 + c * c
    np.testing.assert_array_equal(r2.laplacian(), 2 * d)


def test_order_one_skips_hessian():
    xs = jt.coords(np.array([[0.2, 0.3]]), order=1)
    j = jt.tanh(xs[0] * xs[1])
    assert j.hess is None
    with pytest.raises(ValueError):
        j.laplacian()


_coef = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(_coef, min_size=6, max_size=6), st.tuples(_coef, _coef))
def test_quadratic_polynomials_exact(c, pt):
    x, y = jt.coord(0, pt), jt.coord(1, pt)
    p = c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    X, Y = pt
    np.testing.assert_allclose(p.grad, [c[1] + 2 * c[3] * X + c[4] * Y, c[2] + c[4] * X + 2 * c[5] * Y], atol=1e-12)
    np.testing.assert_allclose(p.hess_matrix(), [[2 * c[3], c[4]], [c[4], 2 * c[5]]], atol=1e-12)


def _compose(ops, xs):
    v = xs[0]
    acc = [v, xs[1], xs[0] * 0.5 + 0.1]
    for k, op in enumerate(ops):
        a, b = acc[k % len(acc)], acc[(k + 1) % len(acc)]
        if op == 0:
            v = a + b
        elif op == 1:
            v = a * b
        elif op == 2:
            v = jt.tanh(a)
        else:
            v = jt.square(a)
        acc.append(v)
    return v


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.integers(0, 3), min_size=2, max_size=8),
    st.tuples(st.floats(-1, 1), st.floats(-1, 1)),
)
def test_random_compositions_match_fd(ops, pt):
    p = np.array(pt)
    j = _compose(ops, [jt.coord(0, p), jt.coord(1, p)])

    def f(q):
        return float(_compose(ops, [jt.coord(0, q), jt.coord(1, q)]).value)

    step = 1e-5
    eye = np.eye(2)
    fd_g = np.array([(f(p + step * e) - f(p - step * e)) / (2 * step) for e in eye])
    fd_h = np.array(
        [
            [(f(p + step * (a + b)) - f(p + step * (a - b)) - f(p - step * (a - b)) + f(p - step * (a + b))) / (4 * step**2) for b in eye]
            for a in eye
        ]
    )
    scale_g = max(1.0, np.abs(j.grad).max())
    scale_h = max(1.0, np.abs(j.hess_matrix()).max())
    assert np.abs(j.grad - fd_g).max() / scale_g < 1e-5
    assert np.abs(j.hess_matrix() - fd_h).max() / scale_h < 1e-5


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_min_max_permutation_consistent(a, b):
    pt = np.array([a, b])
    x, y = jt.coord(0, pt), jt.coord(1, pt)
    if a != b:
        np.testing.assert_array_equal(jt.minimum(x, y).data, jt.minimum(y, x).data)
        np.testing.assert_array_equal(jt.maximum(x, y).data, jt.maximum(y, x).data)
