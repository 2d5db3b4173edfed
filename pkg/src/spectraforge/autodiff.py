"""Reverse-mode parameter gradients over jet-valued computations.

A :class:`ParamTape` records every operation of one forward pass.  Nodes are
either *jet-valued* (payload :class:`~spectraforge.jet.Jet2`, carrying spatial
derivatives) or *plain* (payload ``ndarray``).  Parameters enter as plain
leaves; inside jet operations they act as spatially constant jets.  The
``extract_*`` operations are the only bridge from jet nodes to plain nodes,
which is how losses containing ``grad u`` and ``lap u`` are formed.

The reverse pass propagates cotangents that mirror the shape of each payload.
For a smooth ``f`` applied to a jet with value ``v``, gradient ``g`` and
Hessian ``H``, the output Hessian channel ``f''(v) g g^T + f'(v) H`` depends on
``v`` through ``f'''``, which the reverse rule evaluates from the recorded input.

Tapes are single-use: build, call :meth:`ParamTape.backward`, then
:meth:`ParamTape.reset` (or discard) before the next forward pass.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import _kernels
from . import jet as jt
from .errors import DegenerateFieldError, NonFiniteError, TapeError
from .jet import Jet2

__all__ = ["Cotangent", "ParamTape", "Var"]


class Cotangent(Jet2):
    """Adjoint of a jet-valued node: ``d_value``, ``d_grad``, ``d_hess`` channels."""

    __slots__ = ()

    @property
    def d_value(self):
        return self.value

    @property
    def d_grad(self):
        return self.grad

    @property
    def d_hess(self):
        return self.hess


class _Node:
    __slots__ = ("kind", "inputs", "payload", "is_jet", "vjp", "requires_grad", "param_slot")

    def __init__(self, kind, inputs, payload, is_jet, vjp, requires_grad, param_slot=None):
        self.kind = kind
        self.inputs = inputs
        self.payload = payload
        self.is_jet = is_jet
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.param_slot = param_slot


class Var:
    """Handle to a node on a tape; supports ``+ - * /`` and unary minus."""

    __slots__ = ("tape", "id")
    __array_ufunc__ = None

    def __init__(self, tape: "ParamTape", node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def node(self) -> _Node:
        return self.tape.nodes[self.id]

    @property
    def payload(self):
        return self.node.payload

    @property
    def is_jet(self) -> bool:
        return self.node.is_jet

    @property
    def value(self):
        """Plain array value; for jet nodes the value channel."""
        p = self.node.payload
        return p.value if self.node.is_jet else p

    @property
    def shape(self):
        p = self.node.payload
        return p.batch_shape if self.node.is_jet else p.shape

    def item(self) -> float:
        return float(np.asarray(self.value).reshape(-1)[0])

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(other, self)

    def __truediv__(self, other):
        return self.tape.div(self, other)

    def __rtruediv__(self, other):
        return self.tape.div(other, self)

    def __neg__(self):
        return self.tape.scale(self, -1.0)

    def __repr__(self) -> str:
        mode = "jet" if self.is_jet else "plain"
        return f"Var(id={self.id}, kind={self.node.kind!r}, {mode}, shape={self.shape})"


def _unbroadcast(adj: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if adj.shape == tuple(shape):
        return adj
    extra = adj.ndim - len(shape)
    if extra:
        adj = adj.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and adj.shape[i] != 1)
    if axes:
        adj = adj.sum(axis=axes, keepdims=True)
    return adj.reshape(shape)


def _unbroadcast_channels(adj: np.ndarray, data_shape: tuple[int, ...]) -> np.ndarray:
    batch = data_shape[1:]
    extra = adj.ndim - 1 - len(batch)
    if extra:
        adj = adj.sum(axis=tuple(range(1, 1 + extra)))
    axes = tuple(1 + i for i, s in enumerate(batch) if s == 1 and adj.shape[1 + i] != 1)
    if axes:
        adj = adj.sum(axis=axes, keepdims=True)
    return adj.reshape(data_shape)


class ParamTape:
    """Append-only record of one forward pass with parameter leaves."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._slots: list[tuple[int, int]] = []

    def reset(self) -> None:
        self.nodes = []
        self._slots = []

    @property
    def n_params(self) -> int:
        return max((stop for _, stop in self._slots), default=0)

    # -- recording helpers ---------------------------------------------------
    def _push(self, kind, inputs, payload, is_jet, vjp=None, requires_grad=None, param_slot=None) -> Var:
        if requires_grad is None:
            requires_grad = any(self.nodes[i].requires_grad for i in inputs)
        self.nodes.append(
            _Node(kind, tuple(inputs), payload, is_jet, vjp if requires_grad else None, requires_grad, param_slot)
        )
        return Var(self, len(self.nodes) - 1)

    def _own(self, v: Var) -> Var:
        if not isinstance(v, Var):
            raise TapeError(f"expected a tape variable, got {type(v).__name__}")
        if v.tape is not self:
            raise TapeError("input variable belongs to a different tape")
        return v

    def _plain(self, x) -> Var:
        if isinstance(x, Var):
            self._own(x)
            if x.is_jet:
                raise TapeError(f"jet node {x.id} used where a plain node is required; use extract_*")
            return x
        if isinstance(x, Jet2):
            raise TapeError("jet constant used where a plain value is required")
        return self.const(x)

    def _jet(self, x, like: Var | None = None) -> Var:
        if isinstance(x, Var):
            self._own(x)
            if not x.is_jet:
                raise TapeError(f"plain node {x.id} used where a jet node is required")
            return x
        if isinstance(x, Jet2):
            return self.jet_const(x)
        if like is None:
            raise TapeError("cannot lift a plain constant to a jet without a reference jet")
        ref = like.payload
        return self.jet_const(jt.constant(x, ref.dim, ref.order))

    # -- leaves --------------------------------------------------------------
    def param(self, index: int, value) -> Var:
        """Register parameter slots ``index .. index + size - 1`` as a plain leaf."""
        value = np.array(value, dtype=np.float64)
        start, stop = int(index), int(index) + value.size
        if start < 0:
            raise TapeError("parameter index must be non-negative")
        for a, b in self._slots:
            if start < b and a < stop:
                raise TapeError(f"parameter slots [{start}, {stop}) already registered on this tape")
        self._slots.append((start, stop))
        return self._push("param", (), value, False, requires_grad=True, param_slot=(start, stop))

    def const(self, value) -> Var:
        return self._push("const", (), np.asarray(value, dtype=np.float64), False, requires_grad=False)

    def jet_const(self, j: Jet2) -> Var:
        if not isinstance(j, Jet2):
            raise TapeError("jet_const expects a Jet2")
        return self._push("jet_const", (), j, True, requires_grad=False)

    # -- generic arithmetic (dispatches on node mode) ------------------------
    def _mode(self, a, b) -> bool:
        ja = isinstance(a, Var) and self._own(a).is_jet or isinstance(a, Jet2)
        jb = isinstance(b, Var) and self._own(b).is_jet or isinstance(b, Jet2)
        pa = isinstance(a, Var) and not a.is_jet
        pb = isinstance(b, Var) and not b.is_jet
        if (ja and pb) or (jb and pa):
            raise TapeError("cannot mix jet-valued and plain nodes in one operation")
        return ja or jb

    def add(self, a, b) -> Var:
        if self._mode(a, b):
            ref = a if isinstance(a, Var) and a.is_jet else b if isinstance(b, Var) else None
            a, b = self._jet(a, ref), self._jet(b, ref)
            pa, pb = a.payload, b.payload
            if pa.dim != pb.dim or pa.order != pb.order:
                raise TapeError("jets of different dimension/order cannot be added")
            ad, bd = jt.pad_channels(pa.data, pb.data)
            out = Jet2(ad + bd, pa.dim, pa.order)
            sa, sb = pa.data.shape, pb.data.shape
            return self._push(
                "jet_add",
                (a.id, b.id),
                out,
                True,
                lambda g: (_unbroadcast_channels(g, sa), _unbroadcast_channels(g, sb)),
            )
        a, b = self._plain(a), self._plain(b)
        va, vb = a.payload, b.payload
        return self._push(
            "add", (a.id, b.id), va + vb, False, lambda g: (_unbroadcast(g, va.shape), _unbroadcast(g, vb.shape))
        )

    def sub(self, a, b) -> Var:
        if isinstance(b, Var):
            return self.add(a, self.scale(b, -1.0))
        if isinstance(b, Jet2):
            return self.add(a, -b)
        return self.add(a, -np.asarray(b, dtype=np.float64))

    def mul(self, a, b) -> Var:
        if self._mode(a, b):
            ref = a if isinstance(a, Var) and a.is_jet else b if isinstance(b, Var) else None
            if not isinstance(a, (Var, Jet2)) or not isinstance(b, (Var, Jet2)):
                # jet times plain constant
                j, c = (a, b) if isinstance(a, (Var, Jet2)) else (b, a)
                j = self._jet(j)
                c = np.asarray(c, dtype=np.float64)
                return self._jet_scale(j, c)
            a, b = self._jet(a, ref), self._jet(b, ref)
            return self._jet_mul(a, b)
        a, b = self._plain(a), self._plain(b)
        va, vb = a.payload, b.payload
        return self._push(
            "mul",
            (a.id, b.id),
            va * vb,
            False,
            lambda g: (_unbroadcast(g * vb, va.shape), _unbroadcast(g * va, vb.shape)),
        )

    def div(self, a, b) -> Var:
        if self._mode(a, b):
            if isinstance(b, (Var, Jet2)):
                return self.mul(a, self.unary(self._jet(b), "reciprocal"))
            return self.mul(a, 1.0 / np.asarray(b, dtype=np.float64))
        a, b = self._plain(a), self._plain(b)
        va, vb = a.payload, b.payload
        if np.any(vb == 0):
            raise DegenerateFieldError(f"division by zero in node {b.id} ({b.node.kind})")
        out = va / vb
        return self._push(
            "div",
            (a.id, b.id),
            out,
            False,
            lambda g: (_unbroadcast(g / vb, va.shape), _unbroadcast(-g * out / vb, vb.shape)),
        )

    def scale(self, a: Var, c: float) -> Var:
        a = self._own(a)
        if a.is_jet:
            return self._jet_scale(a, np.asarray(c, dtype=np.float64))
        return self._push("scale", (a.id,), a.payload * c, False, lambda g: (g * c,))

    # -- jet-specific --------------------------------------------------------
    def _jet_scale(self, a: Var, c: np.ndarray) -> Var:
        pa = a.payload
        shape = pa.data.shape
        return self._push(
            "jet_scale",
            (a.id,),
            Jet2(pa.data * c[None] if c.ndim else pa.data * c, pa.dim, pa.order),
            True,
            lambda g: (_unbroadcast_channels(g * c[None] if c.ndim else g * c, shape),),
        )

    def _jet_mul(self, a: Var, b: Var) -> Var:
        pa, pb = a.payload, b.payload
        if pa.dim != pb.dim or pa.order != pb.order:
            raise TapeError("jets of different dimension/order cannot be multiplied")
        dim, order = pa.dim, pa.order
        ad, bd = jt.pad_channels(pa.data, pb.data)
        sa, sb = pa.data.shape, pb.data.shape
        out = Jet2(jt.mul_data(ad, bd, dim, order), dim, order)
        need_a, need_b = a.node.requires_grad, b.node.requires_grad

        def vjp(g):
            da = _mul_adjoint(g, bd, dim, order) if need_a else None
            db = _mul_adjoint(g, ad, dim, order) if need_b else None
            return (
                None if da is None else _unbroadcast_channels(da, sa),
                None if db is None else _unbroadcast_channels(db, sb),
            )

        return self._push("jet_mul", (a.id, b.id), out, True, vjp)

    def unary(self, a: Var, name: str, c: float = 1.0) -> Var:
        """Apply tanh / square / identity / scale / exp / reciprocal / sqrt."""
        a = self._own(a)
        if not a.is_jet:
            v = a.payload
            f, f1, _, _ = jt.derivatives(name, v, c, third=False)
            return self._push(name, (a.id,), f, False, lambda g: (g * f1,))
        pa = a.payload
        dim, order, data = pa.dim, pa.order, pa.data
        f, f1, f2, f3 = jt.derivatives(name, pa.value, c, third=False)
        out = Jet2(jt.unary_data(data, dim, order, f, f1, f2), dim, order)

        def vjp(g):
            return (_unary_adjoint(g, data, dim, order, f1, f2, f3),)

        return self._push(f"jet_{name}", (a.id,), out, True, vjp)

    def tanh(self, a: Var) -> Var:
        return self.unary(a, "tanh")

    def square(self, a: Var) -> Var:
        return self.unary(a, "square")

    def linear(self, x, W: Var, b: Var | None = None) -> Var:
        """Dense layer ``x @ W + b``; for jets ``b`` only shifts the value channel."""
        W = self._plain(W)
        if b is not None:
            b = self._plain(b)
        Wv = W.payload
        bv = None if b is None else b.payload
        if isinstance(x, Jet2) or (isinstance(x, Var) and self._own(x).is_jet):
            x = self._jet(x)
            px = x.payload
            xd = px.data
            k = xd.shape[-1]
            if Wv.shape[0] != k:
                raise TapeError(f"layer expects {Wv.shape[0]} inputs, got {k}")
            x2 = xd.reshape(-1, k)
            out = (x2 @ Wv).reshape(xd.shape[:-1] + (Wv.shape[1],))
            if bv is not None:
                out[0] += bv
            need_x = x.node.requires_grad
            need_b = b is not None

            def vjp(g):
                g2 = g.reshape(-1, g.shape[-1])
                dx = (g2 @ Wv.T).reshape(xd.shape) if need_x else None
                dW = x2.T @ g2
                res = (dx, dW)
                if need_b:
                    res += (g[0].reshape(-1, g.shape[-1]).sum(axis=0),)
                return res

            inputs = (x.id, W.id) + ((b.id,) if b is not None else ())
            return self._push("jet_linear", inputs, Jet2(out, px.dim, px.order), True, vjp)

        x = self._plain(x)
        xv = x.payload
        out = xv @ Wv
        if bv is not None:
            out = out + bv
        need_x = x.node.requires_grad

        def vjp_plain(g):
            g2 = g.reshape(-1, g.shape[-1])
            x2 = xv.reshape(-1, xv.shape[-1])
            dx = g @ Wv.T if need_x else None
            res = (dx, x2.T @ g2)
            if b is not None:
                res += (g2.sum(axis=0),)
            return res

        inputs = (x.id, W.id) + ((b.id,) if b is not None else ())
        return self._push("linear", inputs, out, False, vjp_plain)

    def reshape(self, a: Var, shape) -> Var:
        a = self._own(a)
        shape = tuple(shape)
        if a.is_jet:
            pa = a.payload
            old = pa.data.shape
            return self._push("jet_reshape", (a.id,), pa.reshape(shape), True, lambda g: (g.reshape(old),))
        old = a.payload.shape
        return self._push("reshape", (a.id,), a.payload.reshape(shape), False, lambda g: (g.reshape(old),))

    def take(self, a: Var, index) -> Var:
        """Sub-batch ``a[index]`` along the first batch axis (slice or index array)."""
        a = self._own(a)
        p = a.payload
        data = p.data if a.is_jet else p
        shape = data.shape
        sel = (slice(None), index) if a.is_jet else (index,)
        out = data[sel]

        def vjp(g):
            adj = np.zeros(shape)
            if isinstance(index, slice):
                adj[sel] = g
            else:
                np.add.at(adj, sel, g)
            return (adj,)

        payload = Jet2(out, p.dim, p.order) if a.is_jet else out
        return self._push("jet_take" if a.is_jet else "take", (a.id,), payload, a.is_jet, vjp)

    def _select(self, kind: str, mask: np.ndarray, a, b) -> Var:
        if self._mode(a, b):
            ref = a if isinstance(a, Var) and a.is_jet else b if isinstance(b, Var) else None
            a, b = self._jet(a, ref), self._jet(b, ref)
            pa, pb = a.payload, b.payload
            sa, sb = pa.data.shape, pb.data.shape
            m = np.asarray(mask)[None]
            ad, bd = jt.pad_channels(pa.data, pb.data)
            out = Jet2(np.where(m, ad, bd), pa.dim, pa.order)
            return self._push(
                f"jet_{kind}",
                (a.id, b.id),
                out,
                True,
                lambda g: (_unbroadcast_channels(np.where(m, g, 0.0), sa), _unbroadcast_channels(np.where(m, 0.0, g), sb)),
            )
        a, b = self._plain(a), self._plain(b)
        va, vb = a.payload, b.payload
        m = np.asarray(mask)
        return self._push(
            kind,
            (a.id, b.id),
            np.where(m, va, vb),
            False,
            lambda g: (_unbroadcast(np.where(m, g, 0.0), va.shape), _unbroadcast(np.where(m, 0.0, g), vb.shape)),
        )

    def _values(self, x):
        if isinstance(x, Var):
            return self._own(x).value
        if isinstance(x, Jet2):
            return x.value
        return np.asarray(x, dtype=np.float64)

    def minimum(self, a, b) -> Var:
        """Elementwise min; the adjoint follows the selected branch, ties choose ``a``."""
        return self._select("min", self._values(a) <= self._values(b), a, b)

    def maximum(self, a, b) -> Var:
        return self._select("max", self._values(a) >= self._values(b), a, b)

    def where(self, mask, a, b) -> Var:
        return self._select("where", np.asarray(mask, dtype=bool), a, b)

    def clamp(self, a, lo: float, hi: float) -> Var:
        """``max(lo, min(hi, a))`` as two branch selections."""
        return self.maximum(self.minimum(a, hi), lo)

    # -- reductions ----------------------------------------------------------
    def sum(self, a: Var, axis=None) -> Var:
        a = self._plain(a)
        v = a.payload
        out = np.sum(v, axis=axis)
        shape = v.shape

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, shape),)
            return (np.broadcast_to(np.expand_dims(g, axis), shape),)

        return self._push("sum", (a.id,), np.asarray(out), False, vjp)

    def mean(self, a: Var, axis=None) -> Var:
        a = self._plain(a)
        n = a.payload.size if axis is None else a.payload.shape[axis]
        return self.scale(self.sum(a, axis), 1.0 / n)

    # -- jet -> plain bridges ------------------------------------------------
    def _extract(self, kind: str, a: Var, out: np.ndarray, scatter: Callable) -> Var:
        a = self._own(a)
        if not a.is_jet:
            raise TapeError(f"{kind} requires a jet-valued node")
        shape = a.payload.data.shape

        def vjp(g):
            adj = np.zeros(shape)
            scatter(adj, g)
            return (adj,)

        return self._push(kind, (a.id,), out, False, vjp)

    def extract_value(self, a: Var) -> Var:
        def scatter(adj, g):
            adj[0] = g

        return self._extract("extract_value", a, self._own(a).payload.value.copy(), scatter)

    def extract_laplacian(self, a: Var) -> Var:
        p = self._own(a).payload
        if p.order != 2:
            raise TapeError("extract_laplacian needs an order-2 jet")
        dim = p.dim
        diag = [1 + dim + k for k, (i, j) in enumerate(jt.hess_pairs(dim)) if i == j]

        def scatter(adj, g):
            for c in diag:
                adj[c] = g

        return self._extract("extract_laplacian", a, p.laplacian(), scatter)

    def extract_dirderiv(self, a: Var, n) -> Var:
        p = self._own(a).payload
        n = np.asarray(n, dtype=np.float64)
        if n.shape[0] != p.dim:
            raise TapeError(f"normal must have leading length {p.dim}")
        norms = np.sqrt((n * n).sum(axis=0))
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise TapeError("extract_dirderiv requires unit normals (geometry bug?)")
        nb = n.reshape(n.shape + (1,) * (p.grad.ndim - n.ndim))
        dim = p.dim

        def scatter(adj, g):
            adj[1 : 1 + dim] = g * nb

        return self._extract("extract_dirderiv", a, (p.grad * nb).sum(axis=0), scatter)

    def extract_gradsq(self, a: Var) -> Var:
        """``|grad|^2`` of a jet node."""
        p = self._own(a).payload
        grad = p.grad
        dim = p.dim

        def scatter(adj, g):
            adj[1 : 1 + dim] = 2.0 * grad * g

        return self._extract("extract_gradsq", a, (grad * grad).sum(axis=0), scatter)

    # -- reverse pass --------------------------------------------------------
    def adjoints(self, loss: Var) -> list:
        """Adjoint of every node w.r.t. a scalar plain ``loss`` (``None`` where unreached)."""
        loss = self._own(loss)
        if loss.is_jet:
            raise TapeError("loss must be a plain node")
        lv = np.asarray(loss.payload)
        if lv.size != 1:
            raise TapeError(f"loss must be scalar, got shape {lv.shape}")
        if not np.all(np.isfinite(lv)):
            raise NonFiniteError(self._first_nonfinite(loss.id))
        adj: list = [None] * (loss.id + 1)
        adj[loss.id] = np.ones_like(lv)
        for nid in range(loss.id, -1, -1):
            g = adj[nid]
            node = self.nodes[nid]
            if g is None or node.vjp is None:
                continue
            for src, ga in zip(node.inputs, node.vjp(g)):
                if ga is None or not self.nodes[src].requires_grad:
                    continue
                adj[src] = ga if adj[src] is None else adj[src] + ga
        return adj

    def backward(self, loss: Var, size: int | None = None) -> np.ndarray:
        """Dense gradient over all registered parameter slots."""
        adj = self.adjoints(loss)
        grad = np.zeros(self.n_params if size is None else size)
        for nid, node in enumerate(self.nodes[: len(adj)]):
            if node.param_slot is None or adj[nid] is None:
                continue
            a, b = node.param_slot
            grad[a:b] += np.asarray(adj[nid]).reshape(-1)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("non-finite parameter gradient")
        return grad

    def _first_nonfinite(self, upto: int) -> str:
        for nid, node in enumerate(self.nodes[: upto + 1]):
            p = node.payload.data if node.is_jet else node.payload
            if not np.all(np.isfinite(p)):
                return f"non-finite loss; first non-finite payload at node {nid} ({node.kind})"
        return "non-finite loss"


def _mul_adjoint(g: np.ndarray, other: np.ndarray, dim: int, order: int) -> np.ndarray:
    """Adjoint w.r.t. one factor of a jet product, given the other factor's channels."""
    ov, og = other[0], other[1 : 1 + dim]
    gv, gg = g[0], g[1 : 1 + dim]
    shape = np.broadcast_shapes(g.shape, other.shape)
    out = np.empty(shape)
    out[0] = gv * ov + (gg * og).sum(axis=0)
    out[1 : 1 + dim] = gg * ov
    if order == 2:
        gh, oh = g[1 + dim :], other[1 + dim :]
        out[0] += (gh * oh).sum(axis=0)
        for k, (i, j) in enumerate(jt.hess_pairs(dim)):
            out[1 + i] += gh[k] * og[j]
            out[1 + j] += gh[k] * og[i]
        out[1 + dim :] = gh * ov
    return out


def _unary_adjoint(g, data, dim, order, f1, f2, f3) -> np.ndarray:
    """Reverse rule of ``unary_data``; ``f3`` may be a thunk evaluated on demand."""
    if _kernels.AVAILABLE and g.shape == data.shape and np.shape(f1) == data.shape[1:]:
        if order == 2 and callable(f3):
            f3 = f3()
        return _kernels.unary_backward(g, data, dim, f1, f2, f3 if order == 2 else None)
    xg = data[1 : 1 + dim]
    gg = g[1 : 1 + dim]
    out = np.empty(np.broadcast_shapes(g.shape, data.shape))
    np.multiply(gg, f1, out=out[1 : 1 + dim])
    tmp = np.empty(out.shape[1:])
    s1 = gg[0] * xg[0]
    for i in range(1, dim):
        np.multiply(gg[i], xg[i], out=tmp)
        s1 += tmp
    acc = g[0] * f1
    if order == 2:
        gh, xh = g[1 + dim :], data[1 + dim :]
        np.multiply(gh, f1, out=out[1 + dim :])
        s3 = np.zeros_like(tmp)
        for k, (i, j) in enumerate(jt.hess_pairs(dim)):
            t = gh[k] * f2
            np.multiply(t, xg[j], out=tmp)
            out[1 + i] += tmp
            np.multiply(t, xg[i], out=tmp)
            out[1 + j] += tmp
            np.multiply(xg[i], xg[j], out=tmp)
            tmp *= gh[k]
            s3 += tmp
            np.multiply(gh[k], xh[k], out=tmp)
            s1 += tmp
        if callable(f3):
            f3 = f3()
        s3 *= f3
        acc += s3
    s1 *= f2
    acc += s1
    out[0] = acc
    return out
