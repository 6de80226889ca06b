# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the entrywise and breakpoint kernels.

Same contracts as ``_kernels_py``; the entrywise kernels fuse the shrink
and assembly passes into a single loop without temporaries.
"""
import numpy as np

from libc.math cimport copysign, fabs, fmax, sqrt, INFINITY

BACKEND = "cython"

cdef double _EPS = 2.220446049250313e-16


def soft_threshold(const double[::1] x, double t):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double v
    with nogil:
        for i in range(n):
            v = x[i]
            o[i] = copysign(fmax(fabs(v) - t, 0.0), v)
    return out


def alm_shrink(const double[::1] b, observed, double rho, double nu, double xi):
    cdef Py_ssize_t i, n = b.shape[0]
    cdef const unsigned char[::1] obs
    cdef bint full = observed is None
    if not full:
        obs = observed
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double v, av, f = nu / (nu + rho), cut = rho * xi
    with nogil:
        for i in range(n):
            v = b[i]
            if full or obs[i]:
                av = fabs(v)
                o[i] = copysign(fmax(av * f, av - cut), v)
            else:
                o[i] = v
    return out


def pspg_assemble(const double[::1] q, const double[::1] d, observed, double w, double c1):
    cdef Py_ssize_t i, n = q.shape[0]
    cdef const unsigned char[::1] obs
    cdef bint full = observed is None
    if not full:
        obs = observed
    lout = np.empty(n)
    sout = np.empty(n)
    cdef double[::1] lo = lout
    cdef double[::1] so = sout
    cdef double r, sv
    with nogil:
        for i in range(n):
            if full or obs[i]:
                r = d[i] - q[i]
                sv = copysign(fmax(fabs(r) - w, 0.0), r)
                so[i] = sv
                lo[i] = c1 * (d[i] - sv) + (1.0 - c1) * q[i]
            else:
                so[i] = -q[i]
                lo[i] = q[i]
    return lout, sout


cdef inline double _phi_break_sq(double a_j, double p_j, Py_ssize_t n_total,
                                 Py_ssize_t j, double xi, double rho) noexcept nogil:
    cdef double g = a_j - rho * xi
    return g * g * (p_j / (a_j * a_j) + (n_total - j))


def theta_bracket(const double[::1] a, double xi, double rho, double delta):
    cdef Py_ssize_t n_total = a.shape[0], i, lo, hi, mid, kbar
    p_arr = np.empty(n_total + 1)
    cdef double[::1] p = p_arr
    cdef double acc = 0.0, cut = rho * xi, d2 = delta * delta
    cdef double s_lo, s_hi
    with nogil:
        p[0] = 0.0
        for i in range(n_total):
            acc += a[i] * a[i]
            p[i + 1] = acc
        # kbar = number of magnitudes <= rho * xi
        lo = 0
        hi = n_total
        while lo < hi:
            mid = (lo + hi) // 2
            if a[mid] <= cut:
                lo = mid + 1
            else:
                hi = mid
        kbar = lo
        lo = kbar
        hi = n_total + 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _phi_break_sq(a[mid - 1], p[mid], n_total, mid, xi, rho) <= d2:
                lo = mid
            else:
                hi = mid
        s_lo = a[lo - 1] / xi - rho if lo > kbar else 0.0
        if s_lo < 0.0:
            s_lo = 0.0
        s_hi = a[lo] / xi - rho if lo < n_total else INFINITY
    return lo, kbar, p[lo], s_lo, s_hi


def theta_root(double p, double c, double rho, double delta, double s_lo, double s_hi,
               int max_iter=200):
    cdef double d2 = delta * delta, s, r, h, dh, s_new, t
    cdef int it
    if c > 0.0:
        t = delta / sqrt(c)
        if t < s_hi:
            s_hi = t
    s = 0.5 * (s_lo + s_hi)
    with nogil:
        for it in range(max_iter):
            r = s / (s + rho)
            h = p * r * r + c * s * s - d2
            if h == 0.0:
                break
            if h > 0.0:
                s_hi = s
            else:
                s_lo = s
            if s_hi - s_lo <= 4.0 * _EPS * s_hi:
                break
            dh = 2.0 * p * rho * s / ((s + rho) * (s + rho) * (s + rho)) + 2.0 * c * s
            s_new = s - h / dh if dh > 0.0 else -1.0
            if not (s_lo < s_new < s_hi):
                s_new = 0.5 * (s_lo + s_hi)
            elif fabs(s_new - s) <= 2.0 * _EPS * s:
                s = s_new
                break
            s = s_new
    return s


def level_search(const double[::1] a, double delta):
    cdef Py_ssize_t n_total = a.shape[0], i, lo, hi, mid
    p_arr = np.empty(n_total + 1)
    cdef double[::1] p = p_arr
    cdef double acc = 0.0, d2 = delta * delta, num
    with nogil:
        p[0] = 0.0
        for i in range(n_total):
            acc += a[i] * a[i]
            p[i + 1] = acc
        lo = 0
        hi = n_total
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if p[mid] + (n_total - mid) * a[mid - 1] * a[mid - 1] <= d2:
                lo = mid
            else:
                hi = mid
        num = d2 - p[lo]
        if num < 0.0:
            num = 0.0
    return sqrt(num / (n_total - lo))
