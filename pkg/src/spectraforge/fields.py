"""Trial eigenfunction and density constructions built on the raw networks.

``u_full``      u = l * H                                   (boundary values exact)
``rho_clamped`` rho = max(lo, min(hi, l_a l_c H + g))
``rho_simple``  rho = max(lo - off, min(hi - off, s l H)) + off

The fixed factors (``l``, ``l_a l_c``, ``g``) depend only on the sample
points, so :meth:`prepare` evaluates them once per point set and the
per-step work is a multiply and a clamp on the tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from . import jet as jt
from .autodiff import ParamTape, Var
from .geometry import ScalarField
from .network import NetworkLayout, forward

__all__ = [
    "RhoClamped",
    "RhoSimple",
    "UFull",
    "build_preset",
    "eval_rho",
    "eval_u",
    "PRESET_FIELDS",
]


def _one(xs):
    return 1.0


@dataclass(frozen=True)
class UFull:
    """``u = l * H`` with homogeneous Dirichlet data."""

    ell: ScalarField
    name: str = "u_full"

    def prepare(self, points: np.ndarray, order: int) -> jt.Jet2:
        return geo.eval_field(self.ell, points, jet=True, order=order)

    def build(self, tape: ParamTape, H: Var, prepared: jt.Jet2) -> Var:
        return tape.mul(tape.jet_const(prepared), H)


@dataclass(frozen=True)
class RhoClamped:
    lo: float
    hi: float
    ell_a: ScalarField
    ell_c: ScalarField = _one
    seed_g: ScalarField = _one
    name: str = "rho_clamped"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("density bounds need lo < hi")

    def prepare(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = geo.eval_field(self.ell_a, points) * geo.eval_field(self.ell_c, points)
        return a, geo.eval_field(self.seed_g, points)

    def build(self, tape: ParamTape, H: Var, prepared) -> Var:
        a, g = prepared
        return tape.clamp(tape.add(tape.mul(H, a), g), self.lo, self.hi)

    def values(self, H: np.ndarray, prepared) -> np.ndarray:
        a, g = prepared
        return np.maximum(np.minimum(a * H + g, self.hi), self.lo)


@dataclass(frozen=True)
class RhoSimple:
    lo: float
    hi: float
    ell: ScalarField
    offset: float = 0.0
    sign: float = 1.0
    name: str = "rho_simple"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("density bounds need lo < hi")

    def prepare(self, points: np.ndarray) -> np.ndarray:
        return self.sign * geo.eval_field(self.ell, points)

    def build(self, tape: ParamTape, H: Var, prepared) -> Var:
        inner = tape.clamp(tape.mul(H, prepared), self.lo - self.offset, self.hi - self.offset)
        return tape.add(inner, np.float64(self.offset))

    def values(self, H: np.ndarray, prepared) -> np.ndarray:
        inner = np.maximum(np.minimum(prepared * H, self.hi - self.offset), self.lo - self.offset)
        return inner + self.offset


RhoConstruction = RhoClamped | RhoSimple


def eval_u(construction: UFull, tape: ParamTape, layout: NetworkLayout, theta, x, *, order: int = 2, **kw) -> Var:
    """Jet node of ``u`` at points ``x``."""
    H = forward(tape, layout, theta, x, jet=True, order=order, **kw)
    return construction.build(tape, H, construction.prepare(np.atleast_2d(x), order))


def eval_rho(construction: RhoConstruction, tape: ParamTape, layout: NetworkLayout, theta, x, **kw) -> Var:
    """Plain node of the density at points ``x`` (value-only network pass)."""
    H = forward(tape, layout, theta, x, jet=False, **kw)
    return construction.build(tape, H, construction.prepare(np.atleast_2d(x)))


# -- presets -------------------------------------------------------------------
def _centred_rsq(center):
    def f(xs):
        out = 0.0
        for x, c in zip(xs, center):
            out = out + (x - c) * (x - c)
        return out

    return f


def _plus_one(f):
    return lambda xs: f(xs) + 1.0


def _box_half_dist(domain: geo.Box3):
    """``2 min(x - lo, hi - x, ...)``, equal to 1 at the centre of the unit cube."""
    sd = geo.signed_distance(domain)
    return lambda xs: 2.0 * sd(xs)


@dataclass(frozen=True)
class FieldPreset:
    u: UFull
    rho: RhoConstruction
    notes: tuple[str, ...] = field(default_factory=tuple)


def build_preset(name: str, domain: geo.DomainSpec, *, direction: str = "min", literal: bool = False) -> FieldPreset:
    """Construction pair for a named example, on the given domain."""
    builder = PRESET_FIELDS.get(name)
    if builder is None:
        raise ValueError(f"unknown field preset {name!r}; choose from {sorted(PRESET_FIELDS)}")
    return builder(domain, direction, literal)


def _ex1(domain, direction, literal):
    # annulus; density in [0, 1]
    u = UFull(geo.annulus_product_ell(domain))
    g = geo.signed_distance(domain)
    if literal:
        rho = RhoSimple(1.0, 2.0, g, offset=1.0, sign=-1.0)
        return FieldPreset(u, rho, ("literal density form: values lie in [1, 2]",))
    return FieldPreset(u, RhoSimple(0.0, 1.0, g, offset=0.0, sign=-1.0))


def _ex2(domain, direction, literal):
    ell = geo.dumbbell_ell(domain)
    u = UFull(ell)
    if literal:
        return FieldPreset(u, RhoSimple(1.0, 2.0, ell, offset=1.0, sign=-1.0), ("literal density form",))
    return FieldPreset(u, RhoSimple(0.0, 1.0, ell, offset=0.0, sign=-1.0))


def _ex3(domain, direction, literal):
    ell_u = geo.boundary_fn_second(domain)
    ell_c = _centred_rsq((0.5, 0.5, 0.5))
    half = _box_half_dist(domain)
    if direction == "min":
        g = lambda xs: 1.0 - half(xs)  # noqa: E731 - density 1 on the walls, 0 at the centre
    else:
        g = half
    return FieldPreset(UFull(ell_u), RhoClamped(0.0, 1.0, ell_u, ell_c, g))


def _clamped_min(center):
    def build(domain, direction, literal):
        ell_u = geo.boundary_fn_fourth(domain)
        ell_c = _centred_rsq(center)
        g = _plus_one(ell_c) if direction == "max" else _plus_one(ell_u)
        return FieldPreset(UFull(ell_u), RhoClamped(1.0, 2.0, ell_u, ell_c, g))

    return build


def _ex6(domain, direction, literal):
    ell_u = geo.boundary_fn_fourth(domain)
    if literal:
        return FieldPreset(UFull(ell_u), RhoSimple(2.0, 3.0, ell_u, offset=1.0), ("literal density form: values in [2, 3]",))
    return FieldPreset(UFull(ell_u), RhoClamped(1.0, 2.0, ell_u, _one, _one))


def _supported(center):
    def build(domain, direction, literal):
        if isinstance(domain, geo.Rectangle):
            a1, a2, a3, a4 = domain.a1, domain.a2, domain.a3, domain.a4
            s = 16.0 / ((a2 - a1) * (a4 - a3))
            ell_u = lambda xs: s * (xs[0] - a1) * (a2 - xs[0]) * (xs[1] - a3) * (a4 - xs[1])  # noqa: E731
        else:
            ell_u = geo.boundary_fn_second(domain)
        ell_c = _centred_rsq(center)
        g = _plus_one(ell_c) if direction == "max" else _plus_one(ell_u)
        return FieldPreset(UFull(ell_u), RhoClamped(1.0, 2.0, ell_u, ell_c, g))

    return build


PRESET_FIELDS: dict[str, Callable] = {
    "ex1": _ex1,
    "ex2": _ex2,
    "ex3": _ex3,
    "ex4": _clamped_min((0.5, 0.5)),
    "ex5": _clamped_min((0.0, 0.0)),
    "ex6": _ex6,
    "ex7": _clamped_min((0.0, 0.0)),
    "ex8": _supported((0.5, 0.5)),
    "ex9": _supported((0.0, 0.0)),
    "ex10": _supported((0.0, 0.0)),
}
