"""Pure numpy implementations of the entrywise and breakpoint kernels.

Mirrors ``_kernels.pyx`` function by function.  Arrays are flat, C
contiguous float64; ``observed`` is a flat uint8 array or ``None`` for a
full mask.
"""
import math

import numpy as np

BACKEND = "python"

_EPS = np.finfo(float).eps


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def alm_shrink(b, observed, rho, nu, xi):
    absb = np.abs(b)
    on = np.sign(b) * np.maximum(absb * (nu / (nu + rho)), absb - rho * xi)
    if observed is None:
        return on
    return np.where(observed.astype(bool), on, b)


def pspg_assemble(q, d, observed, w, c1):
    """Closed-form projection on observed entries, ``L = q, S = -q`` elsewhere.

    ``S = shrink(d - q, w)`` and ``L = c1 (d - S) + (1 - c1) q`` on the
    observed set.
    """
    s = soft_threshold(d - q, w)
    l = c1 * (d - s) + (1.0 - c1) * q
    if observed is None:
        return l, s
    obs = observed.astype(bool)
    return np.where(obs, l, q), np.where(obs, s, -q)


def _phi_break_sq(a_j, p_j, n_total, j, xi, rho):
    # phi^2 at the breakpoint where entry j stops being capped
    g = a_j - rho * xi
    return g * g * (p_j / (a_j * a_j) + (n_total - j))


def theta_bracket(a, xi, rho, delta):
    """Locate the breakpoint segment holding the multiplier.

    `a` holds nonnegative magnitudes sorted ascending.  Returns
    ``(jstar, kbar, p_jstar, s_lo, s_hi)`` where ``s = 1/theta`` lies in
    ``[s_lo, s_hi]`` and ``p_jstar`` is the sum of the ``jstar`` smallest
    squared magnitudes.  ``jstar == len(a)`` means no entry is capped.
    """
    n_total = a.shape[0]
    p = np.empty(n_total + 1)
    p[0] = 0.0
    np.cumsum(a * a, out=p[1:])
    kbar = int(np.searchsorted(a, rho * xi, side="right"))
    d2 = delta * delta
    lo, hi = kbar, n_total + 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _phi_break_sq(a[mid - 1], p[mid], n_total, mid, xi, rho) <= d2:
            lo = mid
        else:
            hi = mid
    jstar = lo
    s_lo = a[jstar - 1] / xi - rho if jstar > kbar else 0.0
    s_hi = a[jstar] / xi - rho if jstar < n_total else math.inf
    return jstar, kbar, float(p[jstar]), float(max(s_lo, 0.0)), float(s_hi)


def theta_root(p, c, rho, delta, s_lo, s_hi, max_iter=200):
    """Increasing root of ``p s^2/(s+rho)^2 + c s^2 = delta^2`` in [s_lo, s_hi].

    Safeguarded Newton: a Newton step leaving the current bracket is
    replaced by bisection.
    """
    d2 = delta * delta
    if c > 0.0:
        s_hi = min(s_hi, delta / math.sqrt(c))
    s = 0.5 * (s_lo + s_hi)
    for _ in range(max_iter):
        r = s / (s + rho)
        h = p * r * r + c * s * s - d2
        if h == 0.0:
            return s
        if h > 0.0:
            s_hi = s
        else:
            s_lo = s
        if s_hi - s_lo <= 4.0 * _EPS * s_hi:
            break
        dh = 2.0 * p * rho * s / (s + rho) ** 3 + 2.0 * c * s
        s_new = s - h / dh if dh > 0.0 else -1.0
        if not (s_lo < s_new < s_hi):
            s_new = 0.5 * (s_lo + s_hi)
        elif abs(s_new - s) <= 2.0 * _EPS * s:
            return s_new
        s = s_new
    return s


def level_search(a, delta):
    """Level ``t`` with ``||min(a, t)||_2 = delta`` for ascending `a`.

    Caller guarantees ``||a||_2 > delta``.
    """
    n_total = a.shape[0]
    p = np.empty(n_total + 1)
    p[0] = 0.0
    np.cumsum(a * a, out=p[1:])
    d2 = delta * delta
    lo, hi = 0, n_total
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if p[mid] + (n_total - mid) * a[mid - 1] * a[mid - 1] <= d2:
            lo = mid
        else:
            hi = mid
    return math.sqrt(max(d2 - p[lo], 0.0) / (n_total - lo))
