"""Shared helpers for the test-suite (finite-difference gradient checks, tiny problems)."""

from __future__ import annotations

import numpy as np

from spectraforge import loss as ls
from spectraforge.autodiff import ParamTape
from spectraforge.network import NetworkLayout, forward, init_xavier


def fd_gradient(f, theta: np.ndarray, step: float = 1e-6) -> np.ndarray:
    g = np.empty_like(theta)
    for k in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += step
        tm[k] -= step
        g[k] = (f(tp) - f(tm)) / (2 * step)
    return g


def max_rel_error(g: np.ndarray, ref: np.ndarray) -> float:
    return float(np.abs(g - ref).max() / max(np.abs(ref).max(), 1e-300))


def tape_gradient(build, theta: np.ndarray) -> tuple[float, np.ndarray]:
    tape = ParamTape()
    out = build(tape, theta)
    return out.item(), tape.backward(out, theta.size)


def gradcheck(build, theta: np.ndarray, step: float = 1e-6) -> float:
    """Max-norm relative error of the tape gradient of ``build(tape, theta)``."""
    _, g = tape_gradient(build, theta)
    ref = fd_gradient(lambda t: build(ParamTape(), t).item(), theta, step)
    return max_rel_error(g, ref)


def random_net(rng, *, T=2, M=2, N=6, d=2, out_act="identity"):
    layout = NetworkLayout(d, T=T, M=M, N=N, out_act=out_act)
    theta = init_xavier(layout, int(rng.integers(1 << 31))).values
    # non-zero biases so every slot is exercised
    theta = theta + 0.1 * rng.standard_normal(theta.size)
    return layout, theta


def loss_family_builders(rng, n_points=5):
    """One tape-building closure per Rayleigh family, over concatenated (u, rho) parameters."""
    lu, tu = random_net(rng)
    lr, tr = random_net(rng)
    nu_ = lu.n_params
    x = rng.uniform(0.1, 0.9, size=(n_points, 2))
    ell = x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])
    xb = np.array([[1.0, 0.3], [0.4, 1.0], [0.0, 0.6]])
    nb = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    kb = np.array([0.5, 1.0, 2.0])

    def rho_of(tape, th):
        H = forward(tape, lr, th[nu_:], x, jet=False, offset=nu_)
        return tape.add(tape.tanh(H), 1.5)

    def second(tape, th):
        u = forward(tape, lu, th[:nu_], x)
        return ls.rayleigh_second_order(tape, u, rho_of(tape, th), alpha=3.0)

    def clamped(tape, th):
        u = forward(tape, lu, th[:nu_], x)
        return ls.rayleigh_clamped(tape, tape.mul(u, ell), rho_of(tape, th))

    def supported(tape, th):
        u = forward(tape, lu, th[:nu_], np.vstack([x, xb]))
        ui, ub = tape.take(u, slice(0, n_points)), tape.take(u, slice(n_points, None))
        lq = ls.rayleigh_supported(tape, ui, rho_of(tape, th), ub, nb, kb, 0.3, 1.0, 2.0)
        return lq + ls.boundary_loss(tape, ub, nb, kb, 0.3, 0.7)

    return {"second_order": second, "clamped": clamped, "supported": supported}, np.concatenate([tu, tr])


def tiny_config(preset: str, *, K=2, R=2, grid=None, N=8, T=1, **sections):
    """A preset shrunk to seconds of compute (small nets, coarse grid)."""
    from spectraforge.config import load_preset

    cfg = load_preset(preset)
    dim = len(cfg.section("sampling")["grid"])
    over = {
        "training": {"K": K, "R": R},
        "network_u": {"N": N, "T": T},
        "network_rho": {"N": N, "T": T},
        "sampling": {"grid": list(grid) if grid else [12] * dim, "n_boundary": 32},
    }
    for k, v in sections.items():
        over.setdefault(k, {}).update(v)
    return cfg.override(**over)
