"""Nesterov smoothing of the nuclear norm and of the masked l1 norm.

``f_mu(L) = max_{||W|| <= 1} <L, W> - mu/2 ||W||_F^2`` evaluates, one
singular value at a time, to the Huber function

    h_mu(s) = s^2 / (2 mu)      if s <= mu
              s - mu / 2        otherwise

and ``g_nu(S) = max_{|Z_ij| <= xi} <P_Omega(S), Z> - nu/2 ||Z||_F^2`` to
the entrywise Huber

    k_nu(s) = s^2 / (2 nu)          if |s| <= nu xi
              xi |s| - nu xi^2 / 2   otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from lrsd.linalg import ObservationMask, SvdFactors, as_matrix, partial_svd


@dataclass(frozen=True)
class SmoothingParams:
    mu: float
    nu: Optional[float]
    xi: float
    tau: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.nu is not None and not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.xi > 0:
            raise ValueError("xi must be positive")


def default_xi(m: int, n: int) -> float:
    return 1.0 / math.sqrt(max(m, n))


def tau(m: int, n: int) -> float:
    """``max{||W||_F^2 / 2 : ||W|| <= 1}`` for an m-by-n matrix."""
    return 0.5 * min(m, n)


def huber(s, mu):
    s = np.abs(np.asarray(s, dtype=np.float64))
    return np.where(s <= mu, s * s / (2.0 * mu), s - 0.5 * mu)


def f_mu_value(L, mu: float) -> float:
    if not mu > 0:
        raise ValueError("mu must be positive")
    s = scipy.linalg.svdvals(as_matrix(L, "L"), check_finite=False)
    return float(huber(s, mu).sum())


def grad_f_mu(L, mu: float, factors: Optional[SvdFactors] = None) -> np.ndarray:
    """``W_mu(L) = U diag(min(s / mu, 1)) V^T``, the gradient of ``f_mu``.

    Pass `factors` (a full thin SVD of `L`, or any thresholded SVD that
    reproduces `L` exactly) to skip the decomposition.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    F = factors if factors is not None else partial_svd(as_matrix(L, "L"), 0.0)
    return F.compose(np.minimum(F.s / mu, 1.0))


def _mask_values(S, mask):
    if mask is None or mask.is_full:
        return S
    return S[mask.array]


def g_nu_value(S, nu: float, xi: float, mask: Optional[ObservationMask] = None) -> float:
    if not (nu > 0 and xi > 0):
        raise ValueError("nu and xi must be positive")
    v = np.abs(_mask_values(as_matrix(S, "S"), mask))
    out = np.where(v <= nu * xi, v * v / (2.0 * nu), xi * v - 0.5 * nu * xi * xi)
    return float(out.sum())


def grad_g_nu(S, nu: float, xi: float, mask: Optional[ObservationMask] = None) -> np.ndarray:
    """``Z_nu(S)``: ``sgn(S) min(|S| / nu, xi)`` on the mask, zero elsewhere."""
    if not (nu > 0 and xi > 0):
        raise ValueError("nu and xi must be positive")
    S = as_matrix(S, "S")
    Z = np.clip(S / nu, -xi, xi)
    if mask is not None and not mask.is_full:
        Z[~mask.array] = 0.0
    return Z


def eps_to_params(epsilon: float, m: int, n: int, both_smoothed: bool = True,
                  xi: Optional[float] = None) -> SmoothingParams:
    """Smoothing parameters whose eps/2-optimal points are eps-optimal.

    Both terms smoothed: ``mu = nu = eps / (4 tau)``.  Only the nuclear
    norm smoothed: ``mu = eps / (2 tau)`` and ``nu`` is ``None``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    t = tau(m, n)
    xi = default_xi(m, n) if xi is None else xi
    if both_smoothed:
        mu = epsilon / (4.0 * t)
        return SmoothingParams(mu=mu, nu=mu, xi=xi, tau=t)
    return SmoothingParams(mu=epsilon / (2.0 * t), nu=None, xi=xi, tau=t)
