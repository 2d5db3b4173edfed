"""Finite-difference eigenvalue oracle for validating trained densities.

* :func:`fd_laplace_eig` solves ``-lap u + alpha rho u = lam u`` on a masked
  grid with zero Dirichlet values at every masked-out neighbour (5-point
  stencil in 2D, 7-point in 3D) by inverse power iteration, each step a
  conjugate-gradient solve.
* :func:`fd_biharmonic_clamped_eig` solves ``lap^2 u = lam rho u`` on a
  rectangle with clamped edges.  Ghost values mirror the first interior line
  (``u_{-1} = u_1``), so the 13-point stencil picks up ``+1`` on the diagonal
  next to each edge.
* :func:`threshold_density` projects a continuous density onto a two-valued
  design of prescribed mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import cg, splu

from . import geometry as geo
from .errors import ConvergenceError, GeometryError

__all__ = [
    "EigResult",
    "MaskedGrid",
    "fd_biharmonic_clamped_eig",
    "fd_laplace_eig",
    "half_square_reference",
    "richardson",
    "threshold_density",
]


@dataclass(frozen=True)
class MaskedGrid:
    """Bounding-box grid (nodes include the box faces), inside mask, density per inside node."""

    lo: np.ndarray
    hi: np.ndarray
    shape: tuple[int, ...]
    mask: np.ndarray  # bool, shape == self.shape
    rho: np.ndarray  # one value per inside node, lexicographic order

    def __post_init__(self):
        if self.mask.shape != tuple(self.shape):
            raise ValueError("mask shape does not match grid shape")
        if not self.mask.any():
            raise GeometryError("masked grid has no inside nodes")
        if self.rho.shape != (int(self.mask.sum()),):
            raise ValueError(f"need one density value per inside node ({int(self.mask.sum())})")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / (np.asarray(self.shape) - 1)

    @property
    def n_inside(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def from_domain(cls, domain: geo.DomainSpec, dims, rho=1.0) -> "MaskedGrid":
        axes = geo.grid_axes(domain, dims)
        shape = tuple(a.size for a in axes)
        pts = geo.grid_points(domain, shape)
        mask = domain.contains(pts).reshape(shape)
        n = int(mask.sum())
        if callable(rho):
            vals = np.asarray(rho(pts[mask.reshape(-1)]), dtype=np.float64)
        else:
            vals = np.broadcast_to(np.asarray(rho, dtype=np.float64), (n,)).copy()
        lo, hi = domain.bbox
        return cls(lo, hi, shape, mask, vals)

    @classmethod
    def from_samples(cls, points: np.ndarray, inside: np.ndarray, rho: np.ndarray) -> "MaskedGrid":
        """Rebuild a grid from lexicographic ``(x, y[, z])`` node rows (density.csv layout)."""
        points = np.asarray(points, dtype=np.float64)
        axes = [np.unique(points[:, i]) for i in range(points.shape[1])]
        shape = tuple(a.size for a in axes)
        if int(np.prod(shape)) != points.shape[0]:
            raise ValueError("density rows do not form a complete tensor grid")
        mesh = np.stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        if not np.allclose(mesh, points, rtol=0, atol=1e-9 * max(1.0, np.abs(points).max())):
            raise ValueError("density rows are not in lexicographic grid order")
        inside = np.asarray(inside, dtype=bool)
        lo = np.array([a[0] for a in axes])
        hi = np.array([a[-1] for a in axes])
        return cls(lo, hi, shape, inside.reshape(shape), np.asarray(rho, dtype=np.float64)[inside])

    def with_rho(self, rho) -> "MaskedGrid":
        return MaskedGrid(self.lo, self.hi, self.shape, self.mask, np.asarray(rho, dtype=np.float64))

    def inside_points(self) -> np.ndarray:
        axes = [np.linspace(self.lo[i], self.hi[i], self.shape[i]) for i in range(self.dim)]
        mesh = np.stack([m.reshape(-1) for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        return mesh[self.mask.reshape(-1)]


@dataclass(frozen=True)
class EigResult:
    eigenvalue: float
    eigenvector: np.ndarray  # on inside nodes; unit 2-norm, positive sum
    iterations: int
    residual: float  # ||A v - lam M v|| / ||lam M v||


def _negative_laplacian(grid: MaskedGrid) -> sp.csr_matrix:
    """5/7-point ``-lap_h`` on inside nodes; masked-out neighbours are zero."""
    mask = grid.mask
    idx = -np.ones(mask.shape, dtype=np.int64)
    idx[mask] = np.arange(grid.n_inside)
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.n_inside)
    for ax, h in enumerate(grid.h):
        w = 1.0 / (h * h)
        diag += 2.0 * w
        for step in (-1, 1):
            nb = np.roll(idx, -step, axis=ax)
            # np.roll wraps around; the wrapped layer is a box face and never inside
            edge = [slice(None)] * grid.dim
            edge[ax] = -1 if step == 1 else 0
            nb[tuple(edge)] = -1
            ok = mask & (nb >= 0)
            rows.append(idx[ok])
            cols.append(nb[ok])
            vals.append(np.full(int(ok.sum()), -w))
    n = grid.n_inside
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _start_vector(grid: MaskedGrid) -> np.ndarray:
    # smooth positive start: product of sines over the bounding box
    pts = grid.inside_points()
    v = np.ones(pts.shape[0])
    for i in range(grid.dim):
        v *= np.sin(np.pi * (pts[:, i] - grid.lo[i]) / (grid.hi[i] - grid.lo[i]))
    return v / np.linalg.norm(v)


def _finish(A, Mdiag, v, lam, it) -> EigResult:
    v = v / np.linalg.norm(v)
    if v.sum() < 0:
        v = -v
    r = A @ v - lam * Mdiag * v
    res = float(np.linalg.norm(r) / max(np.linalg.norm(lam * Mdiag * v), 1e-300))
    return EigResult(float(lam), v, it, res)


def fd_laplace_eig(
    grid: MaskedGrid,
    alpha: float = 0.0,
    rho=None,
    *,
    tol: float = 1e-8,
    max_iter: int = 500,
    cg_rtol: float = 1e-11,
    cg_maxiter: int | None = None,
) -> EigResult:
    """Smallest eigenpair of ``-lap_h + alpha diag(rho)`` by inverse iteration + CG."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    rho = grid.rho if rho is None else np.broadcast_to(np.asarray(rho, dtype=np.float64), (grid.n_inside,))
    A = (_negative_laplacian(grid) + sp.diags(alpha * rho)).tocsr()
    ones = np.ones(grid.n_inside)
    v = _start_vector(grid)
    lam_old = float(v @ (A @ v))
    for it in range(1, max_iter + 1):
        w, info = cg(A, v, x0=v / max(lam_old, 1e-300), rtol=cg_rtol, atol=0.0, maxiter=cg_maxiter or 20 * grid.n_inside)
        if info != 0:
            raise ConvergenceError(f"CG did not converge in inverse iteration step {it} (info={info})")
        v = w / np.linalg.norm(w)
        lam = float(v @ (A @ v))
        if abs(lam - lam_old) <= tol * abs(lam):
            return _finish(A, ones, v, lam, it)
        lam_old = lam
    raise ConvergenceError(f"inverse iteration did not reach tol={tol:g} in {max_iter} steps")


def _d2(n: int, h: float) -> sp.csr_matrix:
    """1D second difference on the n interior nodes of a segment with zero end values."""
    return sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csr") / (h * h)


def _d4_clamped(n: int, h: float) -> sp.csr_matrix:
    """1D fourth difference with zero end values and mirrored ghosts."""
    d2 = _d2(n, 1.0)
    d4 = (d2 @ d2).tolil()
    d4[0, 0] += 2.0
    d4[n - 1, n - 1] += 2.0
    return d4.tocsr() / h**4


def _bilaplacian(nx: int, ny: int, hx: float, hy: float) -> sp.csr_matrix:
    ix, iy = sp.identity(nx, format="csr"), sp.identity(ny, format="csr")
    B = sp.kron(_d4_clamped(nx, hx), iy) + 2.0 * sp.kron(_d2(nx, hx), _d2(ny, hy)) + sp.kron(ix, _d4_clamped(ny, hy))
    return B.tocsc()


def fd_biharmonic_clamped_eig(
    domain: geo.DomainSpec,
    dims,
    rho=1.0,
    *,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> EigResult:
    """Smallest ``lam`` of ``B u = lam diag(rho) u`` on a clamped rectangle.

    ``dims`` counts grid nodes per axis including the edges; ``rho`` is a
    scalar, a callable of points ``(P, 2)`` or an array over the strictly
    interior nodes in lexicographic order.
    """
    if not isinstance(domain, geo.Rectangle):
        raise GeometryError("the clamped biharmonic oracle supports rectangles only")
    grid = MaskedGrid.from_domain(domain, dims, rho)
    rvals = grid.rho
    if np.any(rvals <= 0):
        raise ValueError("density must be positive for the generalized eigenproblem")
    nx, ny = (s - 2 for s in grid.shape)
    hx, hy = grid.h
    B = _bilaplacian(nx, ny, hx, hy)
    lu = splu(B)
    v = _start_vector(grid)
    lam_old = float(v @ (B @ v)) / float(v @ (rvals * v))
    for it in range(1, max_iter + 1):
        w = lu.solve(rvals * v)
        v = w / np.linalg.norm(w)
        lam = float(v @ (B @ v)) / float(v @ (rvals * v))
        if abs(lam - lam_old) <= tol * abs(lam):
            return _finish(B, rvals, v, lam, it)
        lam_old = lam
    raise ConvergenceError(f"inverse iteration did not reach tol={tol:g} in {max_iter} steps")


def threshold_density(rho, c_mean: float, rho_lo: float, rho_hi: float) -> np.ndarray:
    """Two-valued design whose mean is ``c_mean`` up to one node.

    The ``round(frac * n)`` largest entries (ties by ascending index) get
    ``rho_hi``, the rest ``rho_lo``, with ``frac = (c_mean - lo) / (hi - lo)``.
    """
    if not rho_lo < c_mean < rho_hi:
        raise ValueError("c_mean must lie strictly between rho_lo and rho_hi")
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    frac = (c_mean - rho_lo) / (rho_hi - rho_lo)
    n_top = int(round(frac * rho.size))
    order = np.argsort(-rho, kind="stable")
    out = np.full(rho.size, float(rho_lo))
    out[order[:n_top]] = rho_hi
    return out


def richardson(values, hs, order: int = 2) -> float:
    """Extrapolate ``lam(h) = lam0 + C h^order`` from the two finest levels."""
    values = np.asarray(values, dtype=np.float64)
    hs = np.asarray(hs, dtype=np.float64)
    i = np.argsort(hs)
    (f1, f2), (h1, h2) = values[i[:2]], hs[i[:2]]
    r = (h2 / h1) ** order
    return float((r * f1 - f2) / (r - 1.0))


def half_square_reference(alpha: float = 10.0) -> float:
    """First eigenvalue on the unit square with potential ``alpha`` on ``x < 1/2``.

    Separation gives ``lam = pi^2 + mu`` where ``mu`` is the first eigenvalue of
    the 1D problem ``-X'' + alpha chi_{x<1/2} X = mu X``, ``X(0) = X(1) = 0``,
    fixed by matching ``X'/X`` at ``x = 1/2``.
    """

    def log_deriv_left(mu):
        # X = sin(k x) (or sinh) on (0, 1/2), k^2 = mu - alpha
        e = mu - alpha
        if e > 0:
            k = math.sqrt(e)
            return k / math.tan(k / 2)
        if e < 0:
            k = math.sqrt(-e)
            return k / math.tanh(k / 2)
        return 2.0

    def mismatch(mu):
        k2 = math.sqrt(mu)
        right = -k2 / math.tan(k2 / 2)  # X = sin(k2 (1 - x)) on (1/2, 1)
        return log_deriv_left(mu) - right

    # the root sits between the free value pi^2 and pi^2 + alpha; tan(k2/2) has no pole below (2 pi)^2
    mu = brentq(mismatch, math.pi**2 + 1e-9, min(math.pi**2 + alpha, 4 * math.pi**2 - 1e-9), xtol=1e-14, rtol=1e-15)
    return math.pi**2 + mu
