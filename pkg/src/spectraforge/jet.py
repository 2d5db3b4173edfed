"""Truncated second-order Taylor arithmetic (2-jets) in two or three space dimensions.

A :class:`Jet2` carries the value, the spatial gradient and the upper triangle
of the spatial Hessian of a scalar field.  Storage is channel-first: ``data``
has shape ``(C, *batch)`` with ``C = 1 + d + d(d+1)/2``, so a whole batch of
sample points (and neurons) moves through a dense layer as one matrix
product.  A single-point jet is simply a jet with an empty batch shape.

Jets may also be truncated at order one (``order=1``, no Hessian channels) for
operators that only need gradients.

The helpers :func:`minimum`, :func:`maximum`, :func:`where`, :func:`sqrt` and
:func:`absolute` accept plain arrays as well as jets, so a scalar-field
formula written once can be evaluated either value-only or as a jet.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DegenerateFieldError

__all__ = [
    "Jet2",
    "absolute",
    "add",
    "constant",
    "coord",
    "coords",
    "derivatives",
    "div",
    "hess_pairs",
    "maximum",
    "minimum",
    "mul",
    "n_channels",
    "sqrt",
    "sub",
    "unary",
    "where",
]


@lru_cache(maxsize=None)
def hess_pairs(dim: int) -> tuple[tuple[int, int], ...]:
    """Index pairs ``(i, j)``, ``i <= j``, in Hessian storage order."""
    return tuple((i, j) for i in range(dim) for j in range(i, dim))


@lru_cache(maxsize=None)
def _pair_index(dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = hess_pairs(dim)
    rows = np.array([p[0] for p in pairs])
    cols = np.array([p[1] for p in pairs])
    diag = np.array([k for k, (i, j) in enumerate(pairs) if i == j])
    return rows, cols, diag


def n_channels(dim: int, order: int = 2) -> int:
    return 1 + dim + (dim * (dim + 1) // 2 if order == 2 else 0)


class Jet2:
    """Value, gradient and symmetric Hessian of a scalar field, batched.

    Instances are treated as immutable: every operation returns a new jet.
    """

    __slots__ = ("data", "dim", "order")
    __array_ufunc__ = None

    def __init__(self, data, dim: int, order: int = 2):
        if dim not in (2, 3):
            raise ValueError(f"jets are defined for d in (2, 3), got {dim}")
        if order not in (1, 2):
            raise ValueError(f"jet order must be 1 or 2, got {order}")
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0 or data.shape[0] != n_channels(dim, order):
            raise ValueError(
                f"expected {n_channels(dim, order)} channels for d={dim}, order={order}; "
                f"got array of shape {data.shape}"
            )
        self.data = data
        self.dim = dim
        self.order = order

    # -- channel views -------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.data[0]

    @property
    def grad(self) -> np.ndarray:
        return self.data[1 : 1 + self.dim]

    @property
    def hess(self) -> np.ndarray | None:
        """Upper-triangle Hessian entries, shape ``(d(d+1)/2, *batch)``."""
        if self.order == 1:
            return None
        return self.data[1 + self.dim :]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.data.shape[1:]

    def hess_matrix(self) -> np.ndarray:
        """Full symmetric Hessian, shape ``(d, d, *batch)``."""
        h = self._require_hess()
        full = np.empty((self.dim, self.dim) + self.batch_shape)
        for k, (i, j) in enumerate(hess_pairs(self.dim)):
            full[i, j] = h[k]
            full[j, i] = h[k]
        return full

    def laplacian(self) -> np.ndarray:
        h = self._require_hess()
        _, _, diag = _pair_index(self.dim)
        return h[diag].sum(axis=0)

    def dirderiv(self, n) -> np.ndarray:
        """Directional derivative ``grad . n``; ``n`` has shape ``(d,)`` or ``(d, *batch)``."""
        n = np.asarray(n, dtype=np.float64)
        if n.shape[0] != self.dim:
            raise ValueError(f"direction must have leading length {self.dim}")
        n = n.reshape(n.shape + (1,) * (self.grad.ndim - n.ndim))
        return (self.grad * n).sum(axis=0)

    def _require_hess(self) -> np.ndarray:
        if self.order == 1:
            raise ValueError("order-1 jet carries no Hessian")
        return self.data[1 + self.dim :]

    def reshape(self, *shape) -> "Jet2":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet2(self.data.reshape((self.data.shape[0],) + tuple(shape)), self.dim, self.order)

    def __getitem__(self, index) -> "Jet2":
        if not isinstance(index, tuple):
            index = (index,)
        return Jet2(self.data[(slice(None),) + index], self.dim, self.order)

    def __repr__(self) -> str:
        return f"Jet2(dim={self.dim}, order={self.order}, batch={self.batch_shape})"

    # -- operators -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return Jet2(-self.data, self.dim, self.order)

    def __pow__(self, p):
        if p == 2:
            return unary(self, "square")
        if p == 1:
            return self
        raise ValueError("only powers 1 and 2 are supported")


# -- constructors ------------------------------------------------------------
def coord(i: int, x, order: int = 2) -> Jet2:
    """Jet of the ``i``-th coordinate at a single point ``x``."""
    x = np.asarray(x, dtype=np.float64)
    dim = x.shape[0]
    if not 0 <= i < dim:
        raise IndexError(f"axis {i} out of range for a {dim}-dimensional point")
    data = np.zeros(n_channels(dim, order))
    data[0] = x[i]
    data[1 + i] = 1.0
    return Jet2(data, dim, order)


def coords(points, order: int = 2) -> list[Jet2]:
    """Coordinate jets for a batch of points of shape ``(P, d)``."""
    points = np.asarray(points, dtype=np.float64)
    n, dim = points.shape
    out = []
    for i in range(dim):
        data = np.zeros((n_channels(dim, order), n))
        data[0] = points[:, i]
        data[1 + i] = 1.0
        out.append(Jet2(data, dim, order))
    return out


def constant(value, dim: int, order: int = 2) -> Jet2:
    value = np.asarray(value, dtype=np.float64)
    data = np.zeros((n_channels(dim, order),) + value.shape)
    data[0] = value
    return Jet2(data, dim, order)


def pad_channels(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Insert singleton batch axes after the channel axis so batch shapes right-align."""
    if a.ndim < b.ndim:
        a = a.reshape(a.shape[:1] + (1,) * (b.ndim - a.ndim) + a.shape[1:])
    elif b.ndim < a.ndim:
        b = b.reshape(b.shape[:1] + (1,) * (a.ndim - b.ndim) + b.shape[1:])
    return a, b


def _lift(a, like: Jet2) -> Jet2:
    if isinstance(a, Jet2):
        if a.dim != like.dim or a.order != like.order:
            raise ValueError("jets of different dimension or order cannot be combined")
        return a
    return constant(a, like.dim, like.order)


# -- arithmetic --------------------------------------------------------------
def add(a, b) -> Jet2:
    if not isinstance(a, Jet2):
        a, b = b, a
    if isinstance(b, Jet2):
        _lift(b, a)
        ad, bd = pad_channels(a.data, b.data)
        return Jet2(ad + bd, a.dim, a.order)
    b = np.asarray(b, dtype=np.float64)
    shape = np.broadcast_shapes(a.batch_shape, b.shape)
    out = np.broadcast_to(a.data, a.data.shape[:1] + shape).copy()
    out[0] += b
    return Jet2(out, a.dim, a.order)


def sub(a, b) -> Jet2:
    if isinstance(b, Jet2):
        return add(a, -b)
    return add(a, -np.asarray(b, dtype=np.float64))


def mul(a, b) -> Jet2:
    if not isinstance(a, Jet2):
        a, b = b, a
    if not isinstance(b, Jet2):
        b = np.asarray(b, dtype=np.float64)
        return Jet2(a.data * b[None], a.dim, a.order)
    b = _lift(b, a)
    return Jet2(mul_data(a.data, b.data, a.dim, a.order), a.dim, a.order)


def mul_data(ad: np.ndarray, bd: np.ndarray, dim: int, order: int) -> np.ndarray:
    """Leibniz rule on raw channel arrays (shared with the reverse tape)."""
    ad, bd = pad_channels(ad, bd)
    shape = np.broadcast_shapes(ad.shape, bd.shape)
    out = np.empty(shape)
    av, bv = ad[0], bd[0]
    ag, bg = ad[1 : 1 + dim], bd[1 : 1 + dim]
    out[0] = av * bv
    out[1 : 1 + dim] = av * bg + bv * ag
    if order == 2:
        rows, cols, _ = _pair_index(dim)
        ah, bh = ad[1 + dim :], bd[1 + dim :]
        out[1 + dim :] = av * bh + bv * ah + ag[rows] * bg[cols] + ag[cols] * bg[rows]
    return out


def div(a, b) -> Jet2:
    if not isinstance(b, Jet2):
        b = np.asarray(b, dtype=np.float64)
        if np.any(b == 0):
            raise DegenerateFieldError("jet division by a zero constant")
        return mul(a, 1.0 / b)
    if np.any(b.value == 0):
        raise DegenerateFieldError("jet division by a field with zero value")
    inv = unary(b, "reciprocal")
    if not isinstance(a, Jet2):
        return mul(inv, a)
    return mul(a, inv)


# -- smooth scalar functions -------------------------------------------------
# Each entry returns (f, f1, f2, f3_thunk); the third derivative is only
# evaluated when a reverse pass asks for it.
def _tanh(v, c):
    t = np.tanh(v)
    s = 1.0 - t * t
    f2 = -2.0 * t * s
    return t, s, f2, lambda: -2.0 * s * (1.0 - 3.0 * t * t)


def _square(v, c):
    one = np.ones_like(v)
    return v * v, 2.0 * v, 2.0 * one, lambda: 0.0 * one


def _identity(v, c):
    one = np.ones_like(v)
    return v, one, 0.0 * one, lambda: 0.0 * one


def _scale(v, c):
    one = np.ones_like(v)
    return c * v, c * one, 0.0 * one, lambda: 0.0 * one


def _exp(v, c):
    e = np.exp(v)
    return e, e, e, lambda: e


def _reciprocal(v, c):
    r = 1.0 / v
    return r, -r * r, 2.0 * r**3, lambda: -6.0 * r**4


def _sqrt(v, c):
    s = np.sqrt(v)
    return s, 0.5 / s, -0.25 / (s * v), lambda: 0.375 / (s * v * v)


UNARY: dict[str, Callable] = {
    "tanh": _tanh,
    "square": _square,
    "identity": _identity,
    "scale": _scale,
    "exp": _exp,
    "reciprocal": _reciprocal,
    "sqrt": _sqrt,
}


def derivatives(name: str, v, c: float = 1.0, third: bool = True):
    """First three derivatives (and value) of the named function at ``v``.

    Returns ``(f, f1, f2, f3)``; with ``third=False`` the last entry is a
    zero-argument callable instead of an array.
    """
    try:
        fn = UNARY[name]
    except KeyError:
        raise ValueError(f"unknown unary function {name!r}") from None
    f, f1, f2, f3 = fn(np.asarray(v, dtype=np.float64), c)
    return f, f1, f2, (f3() if third else f3)


def unary_data(data: np.ndarray, dim: int, order: int, f, f1, f2) -> np.ndarray:
    if _kernels.AVAILABLE and np.shape(f1) == data.shape[1:] and np.shape(f2) == data.shape[1:]:
        return _kernels.unary_forward(data, dim, f, f1, f2)
    out = np.empty_like(data)
    g = data[1 : 1 + dim]
    out[0] = f
    np.multiply(g, f1, out=out[1 : 1 + dim])
    if order == 2:
        oh = out[1 + dim :]
        np.multiply(data[1 + dim :], f1, out=oh)
        tmp = np.empty(data.shape[1:])
        for k, (i, j) in enumerate(hess_pairs(dim)):
            np.multiply(g[i], g[j], out=tmp)
            tmp *= f2
            oh[k] += tmp
    return out


def unary(a: Jet2, name: str, c: float = 1.0) -> Jet2:
    """Chain rule for a smooth scalar function applied to a jet."""
    f, f1, f2, _ = derivatives(name, a.value, c)
    return Jet2(unary_data(a.data, a.dim, a.order, f, f1, f2), a.dim, a.order)


def tanh(a: Jet2) -> Jet2:
    return unary(a, "tanh")


def square(a: Jet2) -> Jet2:
    return unary(a, "square")


# -- branch selection --------------------------------------------------------
def _select(mask, a, b):
    if not isinstance(a, Jet2) and not isinstance(b, Jet2):
        return np.where(mask, a, b)
    like = a if isinstance(a, Jet2) else b
    a, b = _lift(a, like), _lift(b, like)
    ad, bd = pad_channels(a.data, b.data)
    return Jet2(np.where(np.asarray(mask)[None], ad, bd), like.dim, like.order)


def _val(a):
    return a.value if isinstance(a, Jet2) else np.asarray(a, dtype=np.float64)


def minimum(a, b):
    """Branch with the smaller value; ties go to ``a``."""
    return _select(_val(a) <= _val(b), a, b)


def maximum(a, b):
    """Branch with the larger value; ties go to ``a``."""
    return _select(_val(a) >= _val(b), a, b)


def where(mask, a, b):
    return _select(mask, a, b)


def absolute(a):
    if isinstance(a, Jet2):
        return maximum(a, -a)
    return np.abs(a)


def sqrt(a):
    if isinstance(a, Jet2):
        return unary(a, "sqrt")
    return np.sqrt(a)
