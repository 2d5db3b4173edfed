"""Domains, sample sets and boundary-condition fields.

Scalar fields in this package are callables ``f(xs)`` taking a sequence of
coordinate components.  The components may be plain arrays (value-only
evaluation) or :class:`~spectraforge.jet.Jet2` objects (value plus spatial
derivatives); every field here is written with the jet-aware helpers so one
formula serves both uses.  :func:`eval_field` does the plumbing.
"""

from __future__ import annotations

import math
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import jet as jt
from .errors import GeometryError

ScalarField = Callable[[Sequence], object]

__all__ = [
    "Annulus",
    "BoundarySamples",
    "Box3",
    "Disk",
    "DomainSpec",
    "Dumbbell",
    "InteriorSamples",
    "Rectangle",
    "SamplePlan",
    "ScalarField",
    "boundary_fn_fourth",
    "boundary_fn_second",
    "domain_from_config",
    "domain_from_preset",
    "eval_field",
    "grid_axes",
    "sample_boundary",
    "sample_interior",
    "signed_distance",
]


def eval_field(f: ScalarField, points, *, jet: bool = False, order: int = 2):
    """Evaluate ``f`` at ``points`` of shape ``(P, d)``; a Jet2 when ``jet``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if jet:
        out = f(jt.coords(points, order))
        if not isinstance(out, jt.Jet2):
            out = jt.constant(np.broadcast_to(out, points.shape[:1]), points.shape[1], order)
        return out
    out = f([points[:, i] for i in range(points.shape[1])])
    return np.broadcast_to(np.asarray(out, dtype=np.float64), points.shape[:1]).copy()


def _rsq(xs, center=(0.0, 0.0)):
    dx = xs[0] - center[0]
    dy = xs[1] - center[1]
    return dx * dx + dy * dy


# -- domain types ------------------------------------------------------------
class DomainSpec(ABC):
    """A bounded domain with a bounding box, strict membership and measures."""

    dim: int = 2

    @property
    @abstractmethod
    def bbox(self) -> tuple[np.ndarray, np.ndarray]: ...

    @abstractmethod
    def contains(self, points) -> np.ndarray:
        """Strict interior membership for points of shape ``(P, d)``."""

    @property
    @abstractmethod
    def measure(self) -> float:
        """Area (2D) or volume (3D)."""

    @property
    @abstractmethod
    def boundary_measure(self) -> float:
        """Perimeter (2D) or surface area (3D)."""

    @property
    def name(self) -> str:
        return type(self).__name__.lower()

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Rectangle(DomainSpec):
    a1: float = 0.0
    a2: float = 1.0
    a3: float = 0.0
    a4: float = 1.0

    def __post_init__(self):
        if not (self.a1 < self.a2 and self.a3 < self.a4):
            raise GeometryError("rectangle needs a1 < a2 and a3 < a4")

    @property
    def bbox(self):
        return np.array([self.a1, self.a3]), np.array([self.a2, self.a4])

    def contains(self, points):
        p = np.atleast_2d(points)
        return (p[:, 0] > self.a1) & (p[:, 0] < self.a2) & (p[:, 1] > self.a3) & (p[:, 1] < self.a4)

    @property
    def measure(self):
        return (self.a2 - self.a1) * (self.a4 - self.a3)

    @property
    def boundary_measure(self):
        return 2.0 * ((self.a2 - self.a1) + (self.a4 - self.a3))

    def to_dict(self):
        return {"kind": "rectangle", "a1": self.a1, "a2": self.a2, "a3": self.a3, "a4": self.a4}


@dataclass(frozen=True)
class Disk(DomainSpec):
    r: float = 1.0

    def __post_init__(self):
        if self.r <= 0:
            raise GeometryError("disk radius must be positive")

    @property
    def bbox(self):
        return np.array([-self.r, -self.r]), np.array([self.r, self.r])

    def contains(self, points):
        p = np.atleast_2d(points)
        return p[:, 0] ** 2 + p[:, 1] ** 2 < self.r**2

    @property
    def measure(self):
        return math.pi * self.r**2

    @property
    def boundary_measure(self):
        return 2.0 * math.pi * self.r

    def to_dict(self):
        return {"kind": "disk", "r": self.r}


@dataclass(frozen=True)
class Annulus(DomainSpec):
    r_in: float = 0.4
    r_out: float = 1.0

    def __post_init__(self):
        if not 0 < self.r_in < self.r_out:
            raise GeometryError("annulus needs 0 < r_in < r_out")

    @property
    def bbox(self):
        return np.array([-self.r_out, -self.r_out]), np.array([self.r_out, self.r_out])

    def contains(self, points):
        p = np.atleast_2d(points)
        rr = p[:, 0] ** 2 + p[:, 1] ** 2
        return (rr > self.r_in**2) & (rr < self.r_out**2)

    @property
    def measure(self):
        return math.pi * (self.r_out**2 - self.r_in**2)

    @property
    def boundary_measure(self):
        return 2.0 * math.pi * (self.r_out + self.r_in)

    def to_dict(self):
        return {"kind": "annulus", "r_in": self.r_in, "r_out": self.r_out}


@dataclass(frozen=True)
class Dumbbell(DomainSpec):
    """Two unit disks centred at ``(±c, 0)`` joined by a bar of half-height ``hh``."""

    r: float = 1.0
    c: float = 2.0
    hh: float = 0.3

    def __post_init__(self):
        if not (0 < self.hh < self.r < self.c):
            raise GeometryError("dumbbell needs 0 < hh < r < c")

    @property
    def bbox(self):
        return np.array([-(self.c + self.r), -self.r]), np.array([self.c + self.r, self.r])

    def contains(self, points):
        p = np.atleast_2d(points)
        x, y = p[:, 0], p[:, 1]
        left = (x + self.c) ** 2 + y**2 < self.r**2
        right = (x - self.c) ** 2 + y**2 < self.r**2
        bar = (np.abs(x) < self.c) & (np.abs(y) < self.hh)
        return left | right | bar

    @property
    def measure(self):
        # two disks plus the part of the bar outside them
        r, hh = self.r, self.hh
        cap = hh * math.sqrt(r * r - hh * hh) + r * r * math.asin(hh / r)
        return 2.0 * math.pi * r * r + 2.0 * self.c * 2.0 * hh - 2.0 * cap

    @property
    def boundary_measure(self):
        r, hh = self.r, self.hh
        arc = 2.0 * math.pi * r - 2.0 * r * math.asin(hh / r)
        edge = 2.0 * (self.c - math.sqrt(r * r - hh * hh))
        return 2.0 * arc + 2.0 * edge

    def to_dict(self):
        return {"kind": "dumbbell", "r": self.r, "c": self.c, "hh": self.hh}


@dataclass(frozen=True)
class Box3(DomainSpec):
    lo: float = 0.0
    hi: float = 1.0
    dim = 3

    def __post_init__(self):
        if not self.lo < self.hi:
            raise GeometryError("box needs lo < hi")

    @property
    def bbox(self):
        return np.full(3, self.lo), np.full(3, self.hi)

    def contains(self, points):
        p = np.atleast_2d(points)
        return np.all((p > self.lo) & (p < self.hi), axis=1)

    @property
    def measure(self):
        return (self.hi - self.lo) ** 3

    @property
    def boundary_measure(self):
        return 6.0 * (self.hi - self.lo) ** 2

    def to_dict(self):
        return {"kind": "box3", "lo": self.lo, "hi": self.hi}


# -- presets -----------------------------------------------------------------
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def domain_from_preset(name: str) -> DomainSpec:
    """Parse a preset name such as ``"annulus(tau=3.5)"`` or ``"annulus(0.4,1)"``."""
    key = name.replace(" ", "")
    fixed = {
        "unit_square": Rectangle(),
        "unit_disk": Disk(),
        "unit_cube": Box3(),
        "dumbbell": Dumbbell(),
    }
    if key in fixed:
        return fixed[key]
    m = re.fullmatch(rf"annulus\(tau=({_NUM})\)", key)
    if m:
        tau = float(m.group(1))
        if tau <= 1:
            raise GeometryError("tau = r_out / r_in must exceed 1")
        return Annulus(1.0 / tau, 1.0)
    m = re.fullmatch(rf"annulus\(({_NUM}),({_NUM})\)", key)
    if m:
        return Annulus(float(m.group(1)), float(m.group(2)))
    raise GeometryError(f"unknown domain preset {name!r}")


def domain_from_config(cfg: dict | str) -> DomainSpec:
    """Domain from a preset string, ``{"preset": ...}`` or explicit ``{"kind": ...}``."""
    if isinstance(cfg, str):
        return domain_from_preset(cfg)
    if "preset" in cfg:
        return domain_from_preset(cfg["preset"])
    params = dict(cfg)
    kind = params.pop("kind", None)
    table = {"rectangle": Rectangle, "disk": Disk, "annulus": Annulus, "dumbbell": Dumbbell, "box3": Box3}
    if kind not in table:
        raise GeometryError(f"unknown domain kind {kind!r}")
    try:
        return table[kind](**params)
    except TypeError as exc:
        raise GeometryError(str(exc)) from None


# -- sampling ----------------------------------------------------------------
@dataclass(frozen=True)
class InteriorSamples:
    points: np.ndarray  # (N_x, d)
    weights: np.ndarray  # |Omega| / N_x each
    grid_shape: tuple[int, ...]
    mask: np.ndarray  # flat bool over the bounding-box grid, lexicographic

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class BoundarySamples:
    points: np.ndarray  # (N_b, d)
    normals: np.ndarray  # (N_b, d), outward unit
    curvature: np.ndarray  # (N_b,)
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class SamplePlan:
    interior: InteriorSamples
    boundary: BoundarySamples | None = None


def grid_axes(domain: DomainSpec, dims) -> list[np.ndarray]:
    lo, hi = domain.bbox
    dims = [int(dims)] * domain.dim if np.isscalar(dims) else [int(n) for n in dims]
    if len(dims) != domain.dim:
        raise GeometryError(f"need {domain.dim} grid sizes, got {len(dims)}")
    if min(dims) < 2:
        raise GeometryError("grid needs at least 2 nodes per axis")
    return [np.linspace(lo[i], hi[i], dims[i]) for i in range(domain.dim)]


def grid_points(domain: DomainSpec, dims) -> np.ndarray:
    """All bounding-box grid nodes in lexicographic order (first axis slowest)."""
    axes = grid_axes(domain, dims)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def sample_interior(domain: DomainSpec, dims) -> InteriorSamples:
    """Uniform bounding-box grid filtered by strict membership."""
    axes = grid_axes(domain, dims)
    pts = grid_points(domain, [a.size for a in axes])
    mask = domain.contains(pts)
    inside = pts[mask]
    if inside.shape[0] == 0:
        raise GeometryError(f"no grid node of {tuple(a.size for a in axes)} lies inside {domain}")
    w = np.full(inside.shape[0], domain.measure / inside.shape[0])
    return InteriorSamples(inside, w, tuple(a.size for a in axes), mask)


def _split_counts(total: int, lengths: Sequence[float]) -> list[int]:
    """Integer split of ``total`` proportional to ``lengths`` (largest remainder)."""
    lengths = np.asarray(lengths, dtype=np.float64)
    raw = total * lengths / lengths.sum()
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[: total - counts.sum()]] += 1
    return counts.tolist()


def _circle(n: int, r: float, outward: int):
    t = 2.0 * np.pi * np.arange(n) / n
    ct, st = np.cos(t), np.sin(t)
    for v in (ct, st):
        # exact zeros at quarter turns keep boundary points on the circle to the last bit
        v[np.abs(v) < 1e-15] = 0.0
    pts = np.stack([r * ct, r * st], axis=1)
    nrm = outward * np.stack([ct, st], axis=1)
    return pts, nrm, np.full(n, outward / r)


def sample_boundary(domain: DomainSpec, n_b: int = 256) -> BoundarySamples:
    """Boundary points with outward normals and curvature (disk, rectangle, annulus)."""
    if n_b < 4:
        raise GeometryError("need at least 4 boundary samples")
    if isinstance(domain, Disk):
        pts, nrm, kap = _circle(n_b, domain.r, +1)
    elif isinstance(domain, Annulus):
        n_out, n_in = _split_counts(n_b, [domain.r_out, domain.r_in])
        po, no, ko = _circle(n_out, domain.r_out, +1)
        pi, ni, ki = _circle(n_in, domain.r_in, -1)
        pts, nrm, kap = np.vstack([po, pi]), np.vstack([no, ni]), np.concatenate([ko, ki])
    elif isinstance(domain, Rectangle):
        a1, a2, a3, a4 = domain.a1, domain.a2, domain.a3, domain.a4
        w, h = a2 - a1, a4 - a3
        counts = _split_counts(n_b, [w, h, w, h])
        pts_l, nrm_l = [], []
        # bottom, right, top, left; midpoints of equal sub-segments keep corners out
        edges = [
            ((a1, a3), (1.0, 0.0), w, (0.0, -1.0)),
            ((a2, a3), (0.0, 1.0), h, (1.0, 0.0)),
            ((a2, a4), (-1.0, 0.0), w, (0.0, 1.0)),
            ((a1, a4), (0.0, -1.0), h, (-1.0, 0.0)),
        ]
        for (start, step, length, normal), k in zip(edges, counts):
            s = (np.arange(k) + 0.5) / k * length
            pts_l.append(np.array(start) + s[:, None] * np.array(step))
            nrm_l.append(np.tile(normal, (k, 1)))
        pts, nrm = np.vstack(pts_l), np.vstack(nrm_l)
        kap = np.zeros(n_b)
    else:
        raise GeometryError(f"boundary sampling is not supported for {domain.name}")
    w = np.full(pts.shape[0], domain.boundary_measure / pts.shape[0])
    return BoundarySamples(pts, nrm, kap, w)


# -- boundary-condition fields -------------------------------------------------
def boundary_fn_second(domain: DomainSpec) -> ScalarField:
    """A field vanishing on the boundary and positive inside."""
    if isinstance(domain, Rectangle):
        a1, a2, a3, a4 = domain.a1, domain.a2, domain.a3, domain.a4
        return lambda xs: (xs[0] - a1) * (a2 - xs[0]) * (xs[1] - a3) * (a4 - xs[1])
    if isinstance(domain, Disk):
        r2 = domain.r**2
        return lambda xs: r2 - _rsq(xs)
    if isinstance(domain, Annulus):
        ri2, ro2 = domain.r_in**2, domain.r_out**2
        return lambda xs: jt.minimum(ro2 - _rsq(xs), _rsq(xs) - ri2)
    if isinstance(domain, Box3):
        lo, hi = domain.lo, domain.hi
        s = 4.0 / (hi - lo) ** 2

        def cube(xs):
            out = s * (xs[0] - lo) * (hi - xs[0])
            for x in xs[1:]:
                out = out * (s * (x - lo) * (hi - x))
            return out

        return cube
    if isinstance(domain, Dumbbell):
        return dumbbell_ell(domain)
    raise GeometryError(f"no second-order boundary function for {domain.name}")


def annulus_product_ell(domain: Annulus) -> ScalarField:
    """``(r_out^2 - r^2)(r^2 - r_in^2)``, the product form used with the annulus."""
    ri2, ro2 = domain.r_in**2, domain.r_out**2
    return lambda xs: (ro2 - _rsq(xs)) * (_rsq(xs) - ri2)


def dumbbell_ell(domain: Dumbbell) -> ScalarField:
    c, hh, r2 = domain.c, domain.hh, domain.r**2
    cut = c + 0.05

    def ell(xs):
        x, y = xs[0], xs[1]
        ell_d = jt.maximum(r2 - _rsq(xs, (c, 0.0)), r2 - _rsq(xs, (-c, 0.0)))
        bar = jt.maximum(hh - jt.absolute(y), ell_d)
        return jt.where(np.abs(_value(x)) <= cut, bar, ell_d)

    return ell


def boundary_fn_fourth(domain: DomainSpec) -> ScalarField:
    """A field with value and normal derivative vanishing on the boundary."""
    if isinstance(domain, Rectangle):
        a1, a2, a3, a4 = domain.a1, domain.a2, domain.a3, domain.a4
        s = 16.0 / ((a2 - a1) ** 2 * (a4 - a3) ** 2)

        def sq(xs):
            q = s * (xs[0] - a1) * (xs[0] - a2) * (xs[1] - a3) * (xs[1] - a4)
            return q * q

        return sq
    if isinstance(domain, Disk):
        r2 = domain.r**2

        def disk(xs):
            q = 1.0 - _rsq(xs) / r2
            return q * q

        return disk
    if isinstance(domain, Annulus):
        ri2, ro2 = domain.r_in**2, domain.r_out**2

        def ann(xs):
            q = (ro2 - _rsq(xs)) * (_rsq(xs) - ri2)
            return q * q

        return ann
    raise GeometryError(f"no fourth-order boundary function for {domain.name}")


def signed_distance(domain: DomainSpec, x=None) -> ScalarField | np.ndarray:
    """Exact signed distance (positive inside) as a field, or evaluated at ``x``."""
    if isinstance(domain, Disk):
        r = domain.r

        def f(xs):
            return r - jt.sqrt(_rsq(xs))

    elif isinstance(domain, Annulus):
        ri, ro = domain.r_in, domain.r_out

        def f(xs):
            rad = jt.sqrt(_rsq(xs))
            return jt.minimum(ro - rad, rad - ri)

    elif isinstance(domain, (Rectangle, Box3)):
        lo, hi = domain.bbox

        def f(xs):
            # inside: distance to the nearest face; outside: -|excess|
            inner = None
            excess_sq = 0.0
            for i, v in enumerate(xs):
                d = jt.minimum(v - lo[i], hi[i] - v)
                inner = d if inner is None else jt.minimum(inner, d)
                excess_sq = excess_sq + np.maximum(-_value(d), 0.0) ** 2
            inside = np.all([_value(v) >= lo[i] for i, v in enumerate(xs)], axis=0) & np.all(
                [_value(v) <= hi[i] for i, v in enumerate(xs)], axis=0
            )
            return jt.where(inside, inner, -np.sqrt(excess_sq))

    else:
        raise GeometryError(f"signed distance is not available for {domain.name}")
    if x is None:
        return f
    return eval_field(f, x)


def _value(a):
    return a.value if isinstance(a, jt.Jet2) else np.asarray(a, dtype=np.float64)
