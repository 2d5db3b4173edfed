"""Residual-block fully connected network, Xavier initialization and Adam.

The network is ``v0 = x W_in``, then ``T`` blocks ``v <- f_M o ... o f_1(v) + v``
with ``f(z) = tanh(z W + b)``, and finally ``y = out_act(v W_out + b_out)``.
Evaluation happens on a :class:`~spectraforge.autodiff.ParamTape`, either in
jet mode (exact spatial gradient and Hessian of ``y``) or value-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import jet as jt
from .autodiff import ParamTape, Var
from .errors import NonFiniteError

HIDDEN_ACTS = ("tanh",)
OUT_ACTS = ("identity", "square")


@dataclass(frozen=True)
class NetworkLayout:
    d_in: int
    T: int = 3
    M: int = 2
    N: int = 80
    hidden_act: str = "tanh"
    out_act: str = "identity"

    def __post_init__(self):
        if self.d_in not in (2, 3):
            raise ValueError(f"d_in must be 2 or 3, got {self.d_in}")
        if min(self.T, self.M, self.N) < 1:
            raise ValueError("T, M and N must all be >= 1")
        if self.hidden_act not in HIDDEN_ACTS:
            raise ValueError(f"hidden_act must be one of {HIDDEN_ACTS}")
        if self.out_act not in OUT_ACTS:
            raise ValueError(f"out_act must be one of {OUT_ACTS}")

    @property
    def n_params(self) -> int:
        N = self.N
        return N * self.d_in + self.T * self.M * (N * N + N) + N + 1

    @cached_property
    def offsets(self) -> dict[str, tuple[int, tuple[int, ...]]]:
        """Name -> (start offset, shape) for each weight array in the flat vector."""
        table: dict[str, tuple[int, tuple[int, ...]]] = {}
        pos = 0

        def put(name, shape):
            nonlocal pos
            table[name] = (pos, shape)
            pos += int(np.prod(shape))

        put("W_in", (self.d_in, self.N))
        for t in range(self.T):
            for m in range(self.M):
                put(f"W{t}.{m}", (self.N, self.N))
                put(f"b{t}.{m}", (self.N,))
        put("W_out", (self.N, 1))
        put("b_out", (1,))
        assert pos == self.n_params
        return table

    def to_dict(self) -> dict:
        return {
            "d_in": self.d_in,
            "T": self.T,
            "M": self.M,
            "N": self.N,
            "hidden_act": self.hidden_act,
            "out_act": self.out_act,
        }


@dataclass
class ParamVector:
    """Flat trainable state of one network plus named views into it."""

    layout: NetworkLayout
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.layout.n_params,):
            raise ValueError(f"expected {self.layout.n_params} parameters, got shape {self.values.shape}")

    def view(self, name: str) -> np.ndarray:
        start, shape = self.layout.offsets[name]
        return self.values[start : start + int(np.prod(shape))].reshape(shape)

    def copy(self) -> "ParamVector":
        return ParamVector(self.layout, self.values.copy())

    def __len__(self) -> int:
        return self.values.size


def init_xavier(layout: NetworkLayout, seed: int) -> ParamVector:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    values = np.zeros(layout.n_params)
    for name, (start, shape) in layout.offsets.items():
        if not name.startswith("W"):
            continue
        fan_in, fan_out = shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        values[start : start + fan_in * fan_out] = rng.uniform(-bound, bound, size=fan_in * fan_out)
    return ParamVector(layout, values)


def _input_jet(x: np.ndarray, order: int) -> jt.Jet2:
    n, d = x.shape
    data = np.zeros((jt.n_channels(d, order), n, d))
    data[0] = x
    for i in range(d):
        data[1 + i, :, i] = 1.0
    return jt.Jet2(data, d, order)


def forward(
    tape: ParamTape,
    layout: NetworkLayout,
    params: ParamVector | np.ndarray,
    x,
    *,
    jet: bool = True,
    order: int = 2,
    offset: int = 0,
    trainable: bool = True,
) -> Var:
    """Evaluate ``H(x; theta)`` at points ``x`` of shape ``(P, d_in)``.

    Returns a jet node of batch shape ``(P,)`` (or a plain ``(P,)`` node when
    ``jet=False``).  With ``trainable`` the weights are registered on the tape
    at slots ``offset + start``; otherwise they enter as constants.
    """
    if isinstance(params, ParamVector):
        if params.layout != layout:
            raise ValueError("parameter vector was built for a different layout")
        params = params.values
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (layout.n_params,):
        raise ValueError(f"layout needs {layout.n_params} parameters, got {params.shape}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != layout.d_in:
        raise ValueError(f"points must have {layout.d_in} coordinates, got {x.shape[1]}")

    def leaf(name):
        start, shape = layout.offsets[name]
        arr = params[start : start + int(np.prod(shape))].reshape(shape)
        return tape.param(offset + start, arr) if trainable else tape.const(arr)

    h = tape.linear(_input_jet(x, order) if jet else tape.const(x), leaf("W_in"))
    for t in range(layout.T):
        y = h
        for m in range(layout.M):
            y = tape.unary(tape.linear(y, leaf(f"W{t}.{m}"), leaf(f"b{t}.{m}")), layout.hidden_act)
        h = y + h
    out = tape.linear(h, leaf("W_out"), leaf("b_out"))
    out = tape.reshape(out, (x.shape[0],))
    if layout.out_act != "identity":
        out = tape.unary(out, layout.out_act)
    return out


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **kw)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.beta1, self.beta2, self.eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new arrays, inputs untouched."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("params, grads and optimizer moments must have equal length")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient passed to adam_step")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.beta1, state.beta2, state.eps)
