# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled estimator kernels: per-record pattern-table interpolation and
Kahan-compensated accumulation of the sampling sums.

These loops dominate quasiprobability estimation on large homodyne datasets
(2 cubic interpolations and n_alpha_A * n_alpha_B fused multiply-adds per
record), so they are kept in C.  quasiqc._kernels_py provides the same
interface in pure NumPy and is selected automatically when this module is
not built.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPLEMENTATION = "cython"


cdef inline void _lagrange4(double t, double* w) noexcept nogil:
    # cubic through the 4 stencil nodes at offsets -1, 0, 1, 2
    w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0
    w[1] = (t * t - 1.0) * (t - 2.0) / 2.0
    w[2] = -t * (t + 1.0) * (t - 2.0) / 2.0
    w[3] = t * (t * t - 1.0) / 6.0


cdef inline void _stencil(double v, double x0, double inv_dx, Py_ssize_t n,
                          Py_ssize_t* idx, double* w) noexcept nogil:
    cdef double u = (v - x0) * inv_dx
    cdef Py_ssize_t i = <Py_ssize_t> u
    if i < 1:
        i = 1
    elif i > n - 3:
        i = n - 3
    idx[0] = i
    _lagrange4(u - i, w)


cdef inline void _interp_row(const double[:, ::1] tab, double xv,
                             double x0, double inv_dx,
                             const Py_ssize_t[::1] ja, const double[:, ::1] wa,
                             double* out, Py_ssize_t na) noexcept nogil:
    cdef Py_ssize_t ix, j, u, v
    cdef double wx[4]
    cdef double acc, col
    _stencil(xv, x0, inv_dx, tab.shape[0], &ix, wx)
    for j in range(na):
        acc = 0.0
        for u in range(4):
            col = 0.0
            for v in range(4):
                col += wa[j, v] * tab[ix - 1 + u, ja[j] - 1 + v]
            acc += wx[u] * col
        out[j] = acc


def alpha_stencils(double[::1] alphas, double a0, double inv_da, Py_ssize_t na_tab):
    """Precompute per-alpha column stencils (indices and Lagrange weights)."""
    cdef Py_ssize_t n = alphas.shape[0]
    idx = np.empty(n, dtype=np.intp)
    wts = np.empty((n, 4), dtype=np.float64)
    cdef Py_ssize_t[::1] idx_v = idx
    cdef double[:, ::1] wts_v = wts
    cdef Py_ssize_t j
    cdef double w[4]
    cdef Py_ssize_t i
    for j in range(n):
        _stencil(alphas[j], a0, inv_da, na_tab, &i, w)
        idx_v[j] = i
        wts_v[j, 0] = w[0]
        wts_v[j, 1] = w[1]
        wts_v[j, 2] = w[2]
        wts_v[j, 3] = w[3]
    return idx, wts


def accumulate_2m(double[::1] xa, double[::1] xb,
                  const double[:, ::1] tab, double x0, double inv_dx,
                  ja_idx, double[:, ::1] ja_wts,
                  jb_idx, double[:, ::1] jb_wts):
    """Sum of per-record pattern products and squared products on a grid.

    Returns (sums, sums2), each (n_alpha_a, n_alpha_b), Kahan-compensated so
    the result is independent of how callers chunk the record stream.
    """
    cdef Py_ssize_t nrec = xa.shape[0]
    cdef Py_ssize_t na = ja_wts.shape[0]
    cdef Py_ssize_t nb = jb_wts.shape[0]
    cdef Py_ssize_t[::1] ja = np.ascontiguousarray(ja_idx, dtype=np.intp)
    cdef Py_ssize_t[::1] jb = np.ascontiguousarray(jb_idx, dtype=np.intp)

    sums = np.zeros((na, nb))
    sums2 = np.zeros((na, nb))
    comp = np.zeros((na, nb))
    comp2 = np.zeros((na, nb))
    fa_buf = np.empty(na)
    fb_buf = np.empty(nb)
    cdef double[:, ::1] s = sums, s2 = sums2, c = comp, c2 = comp2
    cdef double[::1] fa = fa_buf, fb = fb_buf
    cdef Py_ssize_t j, ia, ib
    cdef double p, q, y, t

    with nogil:
        for j in range(nrec):
            _interp_row(tab, xa[j], x0, inv_dx, ja, ja_wts, &fa[0], na)
            _interp_row(tab, xb[j], x0, inv_dx, jb, jb_wts, &fb[0], nb)
            for ia in range(na):
                p = fa[ia]
                for ib in range(nb):
                    q = p * fb[ib]
                    y = q - c[ia, ib]
                    t = s[ia, ib] + y
                    c[ia, ib] = (t - s[ia, ib]) - y
                    s[ia, ib] = t
                    q = q * q
                    y = q - c2[ia, ib]
                    t = s2[ia, ib] + y
                    c2[ia, ib] = (t - s2[ia, ib]) - y
                    s2[ia, ib] = t
    return sums, sums2


def accumulate_1m(double[::1] xv,
                  const double[:, ::1] tab, double x0, double inv_dx,
                  ja_idx, double[:, ::1] ja_wts):
    """Single-mode analog of accumulate_2m."""
    cdef Py_ssize_t nrec = xv.shape[0]
    cdef Py_ssize_t na = ja_wts.shape[0]
    cdef Py_ssize_t[::1] ja = np.ascontiguousarray(ja_idx, dtype=np.intp)

    sums = np.zeros(na)
    sums2 = np.zeros(na)
    comp = np.zeros(na)
    comp2 = np.zeros(na)
    fa_buf = np.empty(na)
    cdef double[::1] s = sums, s2 = sums2, c = comp, c2 = comp2, fa = fa_buf
    cdef Py_ssize_t j, ia
    cdef double q, y, t

    with nogil:
        for j in range(nrec):
            _interp_row(tab, xv[j], x0, inv_dx, ja, ja_wts, &fa[0], na)
            for ia in range(na):
                q = fa[ia]
                y = q - c[ia]
                t = s[ia] + y
                c[ia] = (t - s[ia]) - y
                s[ia] = t
                q = q * q
                y = q - c2[ia]
                t = s2[ia] + y
                c2[ia] = (t - s2[ia]) - y
                s2[ia] = t
    return sums, sums2
