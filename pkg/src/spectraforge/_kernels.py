"""Fused loops for the elementwise jet chain rule and its adjoint.

Both kernels work on channel arrays flattened to ``(C, n)``.  They are
compiled with numba when it is importable; callers fall back to the numpy
formulation in :mod:`spectraforge.jet` / :mod:`spectraforge.autodiff` otherwise.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

AVAILABLE = numba is not None


def _unary_fwd(data, dim, f, f1, f2, out):
    C, n = data.shape
    has_h = C > 1 + dim
    for p in range(n):
        a1 = f1[p]
        a2 = f2[p]
        out[0, p] = f[p]
        for i in range(dim):
            out[1 + i, p] = a1 * data[1 + i, p]
        if has_h:
            k = 1 + dim
            for i in range(dim):
                gi = data[1 + i, p]
                for j in range(i, dim):
                    out[k, p] = a2 * gi * data[1 + j, p] + a1 * data[k, p]
                    k += 1


def _unary_bwd(g, data, dim, f1, f2, f3, out):
    C, n = data.shape
    has_h = C > 1 + dim
    for p in range(n):
        a1 = f1[p]
        a2 = f2[p]
        s1 = 0.0
        for i in range(dim):
            out[1 + i, p] = a1 * g[1 + i, p]
            s1 += g[1 + i, p] * data[1 + i, p]
        acc = g[0, p] * a1
        if has_h:
            s3 = 0.0
            k = 1 + dim
            for i in range(dim):
                xi = data[1 + i, p]
                for j in range(i, dim):
                    xj = data[1 + j, p]
                    gh = g[k, p]
                    t = gh * a2
                    out[1 + i, p] += t * xj
                    out[1 + j, p] += t * xi
                    s3 += gh * xi * xj
                    s1 += gh * data[k, p]
                    out[k, p] = gh * a1
                    k += 1
            acc += s3 * f3[p]
        out[0, p] = acc + s1 * a2


if AVAILABLE:
    _unary_fwd = numba.njit(cache=True, nogil=True)(_unary_fwd)
    _unary_bwd = numba.njit(cache=True, nogil=True)(_unary_bwd)


def unary_forward(data: np.ndarray, dim: int, f, f1, f2) -> np.ndarray:
    C = data.shape[0]
    d2 = np.ascontiguousarray(data).reshape(C, -1)
    out = np.empty_like(d2)
    _unary_fwd(d2, dim, _flat(f), _flat(f1), _flat(f2), out)
    return out.reshape(data.shape)


def unary_backward(g: np.ndarray, data: np.ndarray, dim: int, f1, f2, f3) -> np.ndarray:
    C = data.shape[0]
    d2 = np.ascontiguousarray(data).reshape(C, -1)
    g2 = np.ascontiguousarray(g).reshape(C, -1)
    out = np.empty_like(d2)
    f3 = _flat(f3) if f3 is not None else np.zeros(d2.shape[1])
    _unary_bwd(g2, d2, dim, _flat(f1), _flat(f2), f3, out)
    return out.reshape(data.shape)


def _flat(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64).reshape(-1)
