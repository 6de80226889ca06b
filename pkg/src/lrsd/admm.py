"""Exact and inexact alternating direction methods for robust PCA (delta = 0, full mask).

Both minimize the augmented Lagrangian

    ||L||_* + xi ||S||_1 - <Lam, L + S - D> + ||L + S - D||_F^2 / (2 rho)

alternately in L and S, then update ``Lam <- Lam - (L + S - D) / rho`` and
``rho <- eta rho``.  IADM does one L/S sweep per multiplier update; EADM
repeats the sweep until the iterates settle.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from lrsd.errors import InvalidConfig, MaxIterations
from lrsd.linalg import shrink_entries, shrink_singular, spectral_norm
from lrsd.result import DecompositionResult, finish

log = logging.getLogger(__name__)

_DEFAULTS = {"iadm": (0.8, 2.0 / 3.0), "eadm": (2.0, 1.0 / 6.0)}


@dataclass
class AdmmConfig:
    """Continuation ``rho_k = max(rho0 eta^k, rho_floor)`` plus stopping rules.

    ``None`` picks the method defaults: IADM ``rho0 = 0.8 ||D||``,
    ``eta = 2/3``; EADM ``rho0 = 2 ||sgn(D)||``, ``eta = 1/6``; ``rho_floor =
    rho0 eta^60``.
    """

    rho0_factor: Optional[float] = None
    eta: Optional[float] = None
    rel_infeas_tol: float = 1e-7
    max_outer_iters: int = 500
    inner_tol_factor: float = 1e-6
    max_inner_iters: int = 100
    rho_floor: Optional[float] = None

    def validate(self):
        if self.eta is not None and not 0 < self.eta <= 1:
            raise InvalidConfig("eta must lie in (0, 1]")
        for name in ("rel_infeas_tol", "inner_tol_factor"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.rho0_factor is not None and not self.rho0_factor > 0:
            raise InvalidConfig("rho0_factor must be positive")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise InvalidConfig("iteration limits must be positive")


def argmin_L_lagrangian(S, Lam, D, rho, return_factors=False):
    """Minimizer of ``rho ||L||_* + ||L + S - D - rho Lam||^2 / 2``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return shrink_singular(D + rho * Lam - S, rho, return_factors=return_factors)


def argmin_S_lagrangian(L, Lam, D, rho, xi):
    """Minimizer of ``rho xi ||S||_1 + ||L + S - D - rho Lam||^2 / 2``."""
    if not (rho > 0 and xi > 0):
        raise ValueError("rho and xi must be positive")
    return shrink_entries(D + rho * Lam - L, rho * xi)


def rho_schedule(rho0, eta, k, floor):
    return max(rho0 * eta**k, floor)


def _check_instance(instance):
    if instance.delta != 0:
        raise InvalidConfig("EADM/IADM solve the equality-constrained problem (delta = 0)")
    if not instance.mask.is_full:
        raise InvalidConfig("EADM/IADM require a fully observed matrix")


def _solve(instance, cfg: AdmmConfig, method: str) -> DecompositionResult:
    cfg.validate()
    _check_instance(instance)
    D = instance.D
    xi = instance.xi
    factor0, eta0 = _DEFAULTS[method]
    factor = cfg.rho0_factor if cfg.rho0_factor is not None else factor0
    eta = cfg.eta if cfg.eta is not None else eta0
    ref = spectral_norm(np.sign(D)) if method == "eadm" else spectral_norm(D)
    rho0 = factor * ref if ref > 0 else 1.0
    floor = cfg.rho_floor if cfg.rho_floor is not None else rho0 * eta**60
    max_inner = cfg.max_inner_iters if method == "eadm" else 1

    normD = float(np.linalg.norm(D)) or 1.0
    inner_tol = cfg.inner_tol_factor * normD
    L = np.zeros_like(D)
    S = np.zeros_like(D)
    Lam = np.zeros_like(D)
    svd_count = lsv_count = 0
    history = []
    converged = False
    k = 0
    for k in range(1, cfg.max_outer_iters + 1):
        rho = rho_schedule(rho0, eta, k - 1, floor)
        for j in range(max_inner):
            L_new, F = argmin_L_lagrangian(S, Lam, D, rho, return_factors=True)
            S_new = argmin_S_lagrangian(L_new, Lam, D, rho, xi)
            svd_count += 1
            lsv_count += F.rank
            step = max(np.linalg.norm(L_new - L), np.linalg.norm(S_new - S))
            L, S = L_new, S_new
            if step <= inner_tol:
                break
        R = L + S - D
        Lam = Lam - R / rho
        infeas = float(np.linalg.norm(R)) / normD
        history.append({"iter": k, "rho": rho, "rank": F.rank, "inner": j + 1,
                        "rel_infeas": infeas})
        log.debug("%s iter %d rho=%.3e rank=%d infeas=%.3e", method, k, rho, F.rank, infeas)
        if infeas < cfg.rel_infeas_tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"{method} stopped after {k} iterations without reaching tolerance",
                      MaxIterations, stacklevel=3)
    return finish(instance, L, S, method, k, svd_count, lsv_count, converged, history,
                  multiplier=Lam, rho0=rho0, eta=eta, rho_floor=floor, config=asdict(cfg))


def solve_iadm(instance, cfg: Optional[AdmmConfig] = None) -> DecompositionResult:
    return _solve(instance, cfg or AdmmConfig(), "iadm")


def solve_eadm(instance, cfg: Optional[AdmmConfig] = None) -> DecompositionResult:
    return _solve(instance, cfg or AdmmConfig(), "eadm")
