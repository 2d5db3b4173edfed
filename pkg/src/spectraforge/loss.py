"""Discrete Rayleigh quotients, constraint and boundary losses, total-loss assembly.

All sample averages use the mean convention: uniform quadrature weights cancel
in every quotient, and the mass constraint compares ``mean(rho)`` with the
target density ``c_mean`` (the target mass divided by the domain measure).

Inputs are tape nodes: jet nodes for ``u`` (interior and boundary) and a plain
node or array for ``rho``.  Passing constant jets for ``u`` (built with
``trainable=False``) gives the density-phase losses without any special path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ParamTape, Var
from .errors import DegenerateFieldError

__all__ = [
    "DENOM_FLOOR",
    "LossBreakdown",
    "LossSpec",
    "boundary_loss",
    "constraint_loss",
    "mass_residual",
    "rayleigh_clamped",
    "rayleigh_second_order",
    "rayleigh_supported",
    "total_loss",
]

DENOM_FLOOR = 1e-12
OPERATORS = ("second_order", "clamped", "supported")


@dataclass(frozen=True)
class LossSpec:
    operator: str
    direction: str = "min"
    alpha: float = 0.0
    nu: float = 0.3
    A1: float = 1.0
    A2: float = 1.0
    S1: float | None = None  # defaults to A1
    boundary_mode: str = "full"
    penalty_M: float = 1.0
    constraint: str = "aug_lagrangian"
    c_mean: float = 0.5
    rho_lo: float = 0.0
    rho_hi: float = 1.0
    max_u_phase_sign: float = 1.0

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}")
        if self.direction not in ("min", "max"):
            raise ValueError("direction must be 'min' or 'max'")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not -1.0 <= self.nu <= 0.5:
            raise ValueError("Poisson ratio must lie in [-1, 0.5]")
        if self.boundary_mode not in ("full", "half"):
            raise ValueError("boundary_mode must be 'full' or 'half'")
        if self.penalty_M <= 0:
            raise ValueError("penalty_M must be positive")
        if self.constraint not in ("penalty", "aug_lagrangian"):
            raise ValueError("constraint must be 'penalty' or 'aug_lagrangian'")
        if not self.rho_lo < self.rho_hi:
            raise ValueError("need rho_lo < rho_hi")
        if not self.rho_lo < self.c_mean < self.rho_hi:
            raise ValueError("c_mean must lie strictly between rho_lo and rho_hi")
        if self.max_u_phase_sign not in (1.0, -1.0):
            raise ValueError("max_u_phase_sign must be +1 or -1")

    @property
    def s1(self) -> float:
        return self.A1 if self.S1 is None else self.S1


@dataclass(frozen=True)
class LossBreakdown:
    L_in: float
    L_w: float
    L_b: float
    L_sum: float
    lambda_estimate: float
    mass_mean: float

    def row(self) -> dict:
        return {
            "L_sum": self.L_sum,
            "L_in": self.L_in,
            "L_w": self.L_w,
            "L_b": self.L_b,
            "lambda": self.lambda_estimate,
            "mass": self.mass_mean,
        }


def _floor(den: Var, what: str) -> None:
    v = float(den.value)
    if not v >= DENOM_FLOOR:
        raise DegenerateFieldError(f"Rayleigh denominator {what} = {v:.3e} below floor {DENOM_FLOOR:g}; u collapsed")


def _rho_node(tape: ParamTape, rho) -> Var:
    return rho if isinstance(rho, Var) else tape.const(rho)


def rayleigh_second_order(tape: ParamTape, u: Var, rho, alpha: float) -> Var:
    """``[mean |grad u|^2 + alpha mean(rho u^2)] / mean(u^2)``."""
    uv = tape.extract_value(u)
    u2 = tape.square(uv)
    den = tape.mean(u2)
    _floor(den, "mean(u^2)")
    num = tape.mean(tape.extract_gradsq(u))
    if alpha:
        num = num + tape.scale(tape.mean(tape.mul(_rho_node(tape, rho), u2)), float(alpha))
    return num / den


def rayleigh_clamped(tape: ParamTape, u: Var, rho) -> Var:
    """``mean((lap u)^2) / mean(rho u^2)``."""
    den = tape.mean(tape.mul(_rho_node(tape, rho), tape.square(tape.extract_value(u))))
    _floor(den, "mean(rho u^2)")
    return tape.mean(tape.square(tape.extract_laplacian(u))) / den


def rayleigh_supported(
    tape: ParamTape,
    u: Var,
    rho,
    u_b: Var,
    normals: np.ndarray,
    kappa: np.ndarray,
    nu: float,
    A1: float,
    A2: float,
    S1: float | None = None,
) -> Var:
    """``[A1 mean(lap u)^2 - A2 mean_b (1-nu) kappa u_n^2] / [S1 mean(rho u^2)]``."""
    S1 = A1 if S1 is None else S1
    den = tape.scale(tape.mean(tape.mul(_rho_node(tape, rho), tape.square(tape.extract_value(u)))), S1)
    _floor(den, "S1 mean(rho u^2)")
    interior = tape.scale(tape.mean(tape.square(tape.extract_laplacian(u))), A1)
    un = tape.extract_dirderiv(u_b, np.asarray(normals, dtype=np.float64).T)
    edge = tape.scale(tape.mean(tape.mul(tape.square(un), (1.0 - nu) * np.asarray(kappa, dtype=np.float64))), A2)
    return (interior - edge) / den


def mass_residual(tape: ParamTape, rho, c_mean: float) -> Var:
    """``h = mean(rho) - c_mean``."""
    return tape.mean(_rho_node(tape, rho)) - np.float64(c_mean)


def constraint_loss(tape: ParamTape, h: Var, mu: float, lam: float = 0.0, method: str = "aug_lagrangian") -> Var:
    """``mu h^2`` (penalty) or ``mu h^2 + lam h`` (augmented Lagrangian)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    out = tape.scale(tape.square(h), float(mu))
    if method == "aug_lagrangian":
        out = out + tape.scale(h, float(lam))
    elif method != "penalty":
        raise ValueError(f"unknown constraint method {method!r}")
    return out


def boundary_loss(tape: ParamTape, u_b: Var, normals: np.ndarray, kappa: np.ndarray, nu: float, M: float) -> Var:
    """``M mean_b [lap u - (1-nu) kappa u_n]^2`` (natural condition residual)."""
    un = tape.extract_dirderiv(u_b, np.asarray(normals, dtype=np.float64).T)
    res = tape.extract_laplacian(u_b) - tape.mul(un, (1.0 - nu) * np.asarray(kappa, dtype=np.float64))
    return tape.scale(tape.mean(tape.square(res)), float(M))


def total_loss(
    tape: ParamTape,
    spec: LossSpec,
    phase: str,
    L_in: Var,
    L_w: Var | None = None,
    L_b: Var | None = None,
    mass_mean: float = float("nan"),
) -> tuple[Var, LossBreakdown]:
    """Signed sum for the active phase, plus a float breakdown for logging.

    Minimisation uses ``L_in + L_w (+ L_b)`` in both phases.  Maximisation
    flips the sign of ``L_in`` in the density phase only; the function phase
    keeps ``max_u_phase_sign * L_in`` (``+1`` by default) so that ``u`` still
    minimises the quotient for the current density.
    """
    if phase not in ("u_phase", "rho_phase"):
        raise ValueError("phase must be 'u_phase' or 'rho_phase'")
    sign = 1.0
    if spec.direction == "max":
        sign = spec.max_u_phase_sign if phase == "u_phase" else -1.0
    total = L_in if sign == 1.0 else tape.scale(L_in, sign)
    if L_w is not None:
        total = total + L_w
    if L_b is not None:
        total = total + L_b
    bd = LossBreakdown(
        L_in=L_in.item(),
        L_w=L_w.item() if L_w is not None else 0.0,
        L_b=L_b.item() if L_b is not None else 0.0,
        L_sum=total.item(),
        lambda_estimate=L_in.item(),
        mass_mean=float(mass_mean),
    )
    return total, bd
