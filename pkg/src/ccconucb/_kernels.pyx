# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops over stored feature rows.

Every function here has a numpy twin in ``_kernels_py`` with the same
signature; ``ccconucb.kernels`` picks one at import time.
"""
import numpy as np

from libc.math cimport exp, sqrt, INFINITY
from libc.stdlib cimport free, malloc

cdef enum:
    _LINEAR_SUM = 0
    _SATURATING = 1

LINEAR_SUM = _LINEAR_SUM
SATURATING = _SATURATING


DEF BLOCK = 64


cdef void _block_terms(const double[:, ::1] X, Py_ssize_t r0, Py_ssize_t nb,
                       const double[::1] theta, const double[:, ::1] Vinv, Py_ssize_t d,
                       double* xt, double* q, double* c) noexcept nogil:
    """Squared V^-1 norms (clamped at 0) and centers for rows r0 .. r0 + nb - 1.

    Rows are copied column-wise into ``xt`` so the innermost loops run over
    independent rows, which the compiler can vectorise without reordering
    any single row's sum.
    """
    cdef Py_ssize_t i, j, k
    cdef double a
    cdef double* xi
    cdef double* xj
    for j in range(d):
        for k in range(nb):
            xt[j * BLOCK + k] = X[r0 + k, j]
    for k in range(nb):
        q[k] = 0.0
        c[k] = 0.0
    for i in range(d):
        xi = xt + i * BLOCK
        a = theta[i]
        for k in range(nb):
            c[k] = c[k] + a * xi[k]
        # Vinv is symmetric: diagonal once, off-diagonal pairs doubled
        a = Vinv[i, i]
        for k in range(nb):
            q[k] = q[k] + a * xi[k] * xi[k]
        for j in range(i + 1, d):
            a = 2.0 * Vinv[i, j]
            xj = xt + j * BLOCK
            for k in range(nb):
                q[k] = q[k] + a * xi[k] * xj[k]
    for k in range(nb):
        if q[k] < 0.0:
            q[k] = 0.0


cdef class _Scratch:
    cdef double* xt
    cdef double* q
    cdef double* c

    def __cinit__(self, Py_ssize_t d):
        self.xt = <double*> malloc(max(d, 1) * BLOCK * sizeof(double))
        self.q = <double*> malloc(BLOCK * sizeof(double))
        self.c = <double*> malloc(BLOCK * sizeof(double))
        if not (self.xt and self.q and self.c):
            raise MemoryError()

    def __dealloc__(self):
        free(self.xt)
        free(self.q)
        free(self.c)


def arm_bounds(const double[:, ::1] X, const double[::1] theta,
               const double[:, ::1] Vinv, double H):
    """Return (center, halfwidth) arrays for each row of X."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], r0, nb, k
    center = np.empty(n, dtype=np.float64)
    half = np.empty(n, dtype=np.float64)
    cdef double[::1] c = center
    cdef double[::1] h = half
    cdef _Scratch s = _Scratch(d)
    with nogil:
        for r0 in range(0, n, BLOCK):
            nb = min(BLOCK, n - r0)
            _block_terms(X, r0, nb, theta, Vinv, d, s.xt, s.q, s.c)
            for k in range(nb):
                c[r0 + k] = s.c[k]
                h[r0 + k] = H * sqrt(s.q[k])
    return center, half


cdef void _row_lowers(const double[:, ::1] X, const double[::1] theta,
                      const double[:, ::1] Vinv, double H, _Scratch s,
                      double[::1] low) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], r0, nb, k
    cdef double v
    for r0 in range(0, n, BLOCK):
        nb = min(BLOCK, n - r0)
        _block_terms(X, r0, nb, theta, Vinv, d, s.xt, s.q, s.c)
        for k in range(nb):
            v = s.c[k] - H * sqrt(s.q[k])
            low[r0 + k] = v if v > 0.0 else 0.0


def group_lower_values(const double[:, ::1] X, const long long[::1] offsets,
                       const double[::1] theta, const double[:, ::1] Vinv,
                       double H, int kind, double scale):
    """Reward of each stored super arm evaluated at its clamped lower bounds.

    Rows ``offsets[g]:offsets[g + 1]`` of X belong to group g.
    """
    cdef Py_ssize_t n_groups = offsets.shape[0] - 1, g, r
    cdef double acc
    out = np.empty(n_groups, dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] low = np.empty(X.shape[0])
    cdef _Scratch s = _Scratch(X.shape[1])
    with nogil:
        _row_lowers(X, theta, Vinv, H, s, low)
        for g in range(n_groups):
            acc = 0.0
            for r in range(offsets[g], offsets[g + 1]):
                acc = acc + low[r]
            o[g] = scale * (1.0 - exp(-acc / scale)) if kind == _SATURATING else acc
    return out


def scan_rows(const double[:, ::1] X, const double[::1] wstar,
              const double[::1] theta, const double[:, ::1] Vinv, double H):
    """Return (sum of squared V^-1 norms, min coverage slack) over the rows of X.

    Coverage slack of a row is min(w* - lower, upper - w*) with unclamped
    bounds; an empty X gives (0, +inf).
    """
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], r0, nb, k
    cdef double total = 0.0, worst = INFINITY
    cdef double hw, a, b
    cdef _Scratch s = _Scratch(d)
    with nogil:
        for r0 in range(0, n, BLOCK):
            nb = min(BLOCK, n - r0)
            _block_terms(X, r0, nb, theta, Vinv, d, s.xt, s.q, s.c)
            for k in range(nb):
                total = total + s.q[k]
                hw = H * sqrt(s.q[k])
                a = wstar[r0 + k] - (s.c[k] - hw)
                b = (s.c[k] + hw) - wstar[r0 + k]
                if a < worst:
                    worst = a
                if b < worst:
                    worst = b
    return total, worst


def group_lower_total(const double[:, ::1] X, const long long[::1] offsets,
                      const unsigned char[::1] is_a0, double a0_value,
                      const double[::1] theta, const double[:, ::1] Vinv,
                      double H, int kind, double scale):
    """Sum of ``group_lower_values``; groups flagged in is_a0 count as a0_value."""
    cdef Py_ssize_t n_groups = offsets.shape[0] - 1, g, r
    cdef double acc, total = 0.0
    cdef double[::1] low = np.empty(X.shape[0])
    cdef _Scratch s = _Scratch(X.shape[1])
    with nogil:
        _row_lowers(X, theta, Vinv, H, s, low)
        for g in range(n_groups):
            if is_a0[g]:
                total = total + a0_value
                continue
            acc = 0.0
            for r in range(offsets[g], offsets[g + 1]):
                acc = acc + low[r]
            total = total + (scale * (1.0 - exp(-acc / scale)) if kind == _SATURATING else acc)
    return total


def ridge_update(double[:, ::1] V, double[:, ::1] Vinv, double[::1] Y,
                 double[::1] theta, const double[::1] x, double w):
    """In-place Sherman-Morrison step for one observation; returns 1 + x' Vinv x."""
    cdef Py_ssize_t d = x.shape[0], i, j
    cdef double denom = 1.0, acc
    cdef double[::1] u = np.empty(d)
    with nogil:
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc = acc + Vinv[i, j] * x[j]
            u[i] = acc
            denom = denom + x[i] * acc
        for i in range(d):
            Y[i] = Y[i] + w * x[i]
            for j in range(d):
                V[i, j] = V[i, j] + x[i] * x[j]
                Vinv[i, j] = Vinv[i, j] - u[i] * u[j] / denom
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc = acc + Vinv[i, j] * Y[j]
            theta[i] = acc
    return denom
