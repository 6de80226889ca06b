"""Partially smoothed proximal gradient for stable PCA with missing data.

Only the nuclear norm is smoothed.  Each iteration takes an accelerated
(FISTA) step on ``f_mu(L) + xi ||P(S)||_1`` over the feasible set

    chi = {(L, S) : ||P(L + S - D)||_F <= delta,  L + S = 0 off Omega}.

Linearizing ``f_mu`` at ``Y`` leaves the subproblem

    min  xi ||P(S)||_1 + ||L - q||_F^2 / (2 rho)   over chi,

with ``q = Y - mu W_mu(Y) = shrink_singular(Y, mu)`` and ``rho = mu``.
It has a closed form once the scalar multiplier ``theta`` of the ball
constraint is known.  On Omega, with ``x = D - q``:

    S = shrink(x, xi (1 + rho theta) / theta)
    L = c (D - S) + (1 - c) q,   c = rho theta / (1 + rho theta)

and ``L = q``, ``S = -q`` off Omega.  The residual magnitudes are then
``min(|x| / (1 + rho theta), xi / theta)``, so ``theta`` solves
``phi(theta) = delta`` for the decreasing function

    phi(theta) = || min(xi / theta, |x| / (1 + rho theta)) ||_F.

Writing ``s = 1 / theta``, an entry is capped at ``xi s`` while
``s <= |x| / xi - rho``.  Sorting the magnitudes turns phi into a
piecewise function whose segment is found by binary search on prefix
sums of ``|x|^2``; the root on that segment is one scalar equation.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from lrsd import kernels
from lrsd.errors import InvalidConfig, MaxIterations, ThetaSearchFailure
from lrsd.linalg import ObservationMask, shrink_singular, spectral_norm
from lrsd.result import DecompositionResult, finish

log = logging.getLogger(__name__)

INTERIOR = "interior"
BOUNDARY = "boundary"
DELTA_ZERO = "delta_zero"


@dataclass
class PspgConfig:
    """Settings for :func:`solve_pspg`.

    ``mu_k = mu0 eta^min(k, K_bar + 1)`` with ``mu0 = mu0_factor ||D||``.
    The run stops when the relative change of ``(L, S)`` drops below
    ``stop_factor * rho_noise``; without a noise level (or with
    ``delta = 0``) the threshold is ``abs_tol``.  ``max_iters`` doubles as
    a fixed iteration budget when ``fixed_budget`` is set.
    """

    mu0_factor: float = 0.8
    eta: float = 2.0 / 3.0
    K_bar: int = 30
    stop_factor: float = 0.05
    abs_tol: float = 1e-7
    max_iters: int = 1000
    fixed_budget: bool = False
    theta_tol: float = 1e-10
    theta_method: str = "newton"
    delta_zero_cutoff: float = 1e-15
    verify: bool = False

    def validate(self):
        if not 0 < self.eta <= 1:
            raise InvalidConfig("eta must lie in (0, 1]")
        if not self.mu0_factor > 0:
            raise InvalidConfig("mu0_factor must be positive")
        if self.K_bar < 0:
            raise InvalidConfig("K_bar must be nonnegative")
        if not (self.stop_factor > 0 and self.abs_tol > 0 and self.theta_tol > 0):
            raise InvalidConfig("tolerances must be positive")
        if self.max_iters < 1:
            raise InvalidConfig("max_iters must be positive")
        if self.theta_method not in ("newton", "quartic"):
            raise InvalidConfig("theta_method must be 'newton' or 'quartic'")
        if not self.delta_zero_cutoff >= 0:
            raise InvalidConfig("delta_zero_cutoff must be nonnegative")


class SubproblemSolution(NamedTuple):
    L_star: np.ndarray
    S_star: np.ndarray
    theta_star: float
    case_tag: str


class SvdStats(NamedTuple):
    rank: int
    computed: int


def compute_q(Y, mu: float):
    """``q = Y - mu W_mu(Y)``, evaluated as ``shrink_singular(Y, mu)``.

    Only singular values above `mu` are computed, which is both cheaper
    and better conditioned than forming the gradient.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    q, F = shrink_singular(Y, mu, return_factors=True)
    return q, SvdStats(F.rank, F.rank)


# -- multiplier search --------------------------------------------------------

def phi(theta: float, a, xi: float, rho: float) -> float:
    """Direct O(n) evaluation of the residual norm at multiplier `theta`."""
    a = np.asarray(a, dtype=np.float64)
    if theta == 0:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(np.minimum(xi / theta, a / (1.0 + rho * theta))))


def _phi_s(s, p, c, rho):
    # prefix-sum form in s = 1/theta on one segment
    return math.sqrt(p * (s / (s + rho)) ** 2 + c * s * s)


def _quartic_root(p, c, rho, delta, s_lo, s_hi):
    d2 = delta * delta
    coeffs = [c, 2.0 * c * rho, c * rho * rho + p - d2, -2.0 * d2 * rho, -d2 * rho * rho]
    roots = np.roots(coeffs if c > 0 else coeffs[2:])
    real = roots[np.abs(roots.imag) <= 1e-8 * np.maximum(1.0, np.abs(roots))].real
    slack = 1e-9 * max(1.0, s_hi if math.isfinite(s_hi) else 1.0)
    cand = real[(real >= s_lo - slack) & (real <= s_hi + slack) & (real > 0)]
    if cand.size == 0:
        raise ThetaSearchFailure(f"no quartic root in [{s_lo}, {s_hi}]")
    # the real root is simple; one Newton polish step on the original equation
    s = float(cand[np.argmin(np.abs([_phi_s(x, p, c, rho) - delta for x in cand]))])
    h = p * (s / (s + rho)) ** 2 + c * s * s - d2
    dh = 2.0 * p * rho * s / (s + rho) ** 3 + 2.0 * c * s
    return s - h / dh if dh > 0 else s


def find_theta(a_sorted, xi: float, rho: float, delta: float, tol: float = 1e-10,
               method: str = "newton") -> float:
    """Multiplier ``theta >= 0`` with ``phi(theta) = delta``.

    Parameters
    ----------
    a_sorted : array
        Magnitudes ``|P(D - q)|`` over the observed set, ascending.
    xi, rho, delta : float
        Positive weights and radius.
    tol : float
        Required ``|phi(theta) - delta| / max(1, delta)``.
    method : {"newton", "quartic"}
        Safeguarded Newton on the bracketing segment, or the polynomial
        roots of the segment equation.

    Returns 0 when ``||a|| <= delta``.
    """
    a = np.ascontiguousarray(a_sorted, dtype=np.float64).reshape(-1)
    if not (xi > 0 and rho > 0 and delta > 0):
        raise ValueError("xi, rho and delta must be positive")
    if a.size and np.any(np.diff(a) < 0):
        raise ValueError("magnitudes must be sorted ascending")
    norm_a = float(np.linalg.norm(a))
    if norm_a <= delta:
        return 0.0
    n = a.size
    jstar, kbar, p, s_lo, s_hi = kernels.theta_bracket(a, xi, rho, delta)
    c = (n - jstar) * xi * xi
    scale = max(1.0, delta)
    # the located segment must bracket delta
    lo_val = _phi_s(s_lo, p, c, rho)
    hi_val = _phi_s(s_hi, p, c, rho) if math.isfinite(s_hi) else math.inf
    if not (lo_val <= delta * (1 + 1e-12) + 1e-300 and hi_val >= delta * (1 - 1e-12)):
        raise ThetaSearchFailure(
            f"segment j*={jstar} (kbar={kbar}) does not bracket delta={delta}: "
            f"phi in [{lo_val}, {hi_val}]")
    if jstar == n:
        s = rho / (math.sqrt(p) / delta - 1.0)
    elif method == "quartic":
        s = _quartic_root(p, c, rho, delta, s_lo, s_hi)
    else:
        s = kernels.theta_root(p, c, rho, delta, s_lo, s_hi)
    theta = 1.0 / s
    if abs(phi(theta, a, xi, rho) - delta) > tol * scale:
        raise ThetaSearchFailure(
            f"root on segment j*={jstar} misses: phi={phi(theta, a, xi, rho)!r}, delta={delta!r}")
    return theta


# -- subproblem ---------------------------------------------------------------

def solve_subproblem(q, D, mask: Optional[ObservationMask], xi: float, rho: float,
                     delta: float, delta_zero_cutoff: float = 1e-15, theta_tol: float = 1e-10,
                     theta_method: str = "newton") -> SubproblemSolution:
    """Closed-form minimizer of ``xi ||P(S)||_1 + ||L - q||^2 / (2 rho)`` over chi."""
    q = np.asarray(q, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if q.shape != D.shape:
        raise ValueError(f"q shape {q.shape} != D shape {D.shape}")
    mask = mask if mask is not None else ObservationMask.full(D.shape)
    if mask.shape != D.shape:
        raise ValueError(f"mask shape {mask.shape} != D shape {D.shape}")
    if not (xi > 0 and rho > 0 and delta >= 0):
        raise ValueError("xi, rho must be positive and delta nonnegative")
    obs = None if mask.is_full else mask.array
    D_obs = D if obs is None else np.where(obs, D, 0.0)
    if delta <= delta_zero_cutoff * float(np.linalg.norm(D_obs)):
        L, S = kernels.pspg_assemble(q, D_obs, mask, rho * xi, 1.0)
        return SubproblemSolution(L, S, math.inf, DELTA_ZERO)
    X = D_obs - q
    x = X.reshape(-1) if obs is None else X[obs]
    a = np.sort(np.abs(x))
    if float(np.linalg.norm(a)) <= delta:
        S = np.zeros_like(q) if obs is None else np.where(obs, 0.0, -q)
        return SubproblemSolution(q.copy(), S, 0.0, INTERIOR)
    theta = find_theta(a, xi, rho, delta, theta_tol, theta_method)
    rt = rho * theta
    L, S = kernels.pspg_assemble(q, D_obs, mask, xi * (1.0 + rt) / theta, rt / (1.0 + rt))
    return SubproblemSolution(L, S, theta, BOUNDARY)


def kkt_residuals(sol: SubproblemSolution, q, D, mask: Optional[ObservationMask], xi: float,
                  rho: float, delta: float) -> dict:
    """Scaled violations of the five optimality conditions of the subproblem.

    With residual ``r = L + S - P(D)`` and multiplier ``Lam = -theta r``
    (``(L - q) / rho`` when ``delta = 0``):

    ``stationarity``  ``||L - q - rho Lam||``
    ``subgradient``   ``Lam / xi`` fails to be an l1 subgradient of ``S`` on Omega,
                      or ``Lam`` is nonzero / ``L + S`` nonzero off Omega
    ``primal``        ``(||r|| - delta)_+``
    ``dual``          ``(-theta)_+``
    ``complementary`` ``theta |delta - ||r|| |``

    Each is divided by ``1 + ||q|| + ||P(D)||`` (the dual and complementary
    terms by ``1 + delta`` times that).
    """
    L, S, theta, tag = sol
    mask = mask if mask is not None else ObservationMask.full(np.shape(D))
    obs = mask.array
    D_obs = np.where(obs, D, 0.0)
    scale = 1.0 + float(np.linalg.norm(q)) + float(np.linalg.norm(D_obs))
    R = np.where(obs, L + S - D_obs, 0.0)
    rnorm = float(np.linalg.norm(R))
    if tag == DELTA_ZERO:
        Lam = np.where(obs, (L - q) / rho, 0.0)
        primal = rnorm
        comp = 0.0
        dual = 0.0
    else:
        Lam = -theta * R
        primal = max(rnorm - delta, 0.0)
        dual = max(-theta, 0.0)
        comp = theta * abs(delta - rnorm)
    stat = float(np.linalg.norm(np.where(obs, L - q - rho * Lam, L - q)))
    g = Lam[obs] / xi
    s = S[obs]
    nz = s != 0
    sub = np.where(nz, np.abs(g - np.sign(s)), np.maximum(np.abs(g) - 1.0, 0.0))
    off = np.abs((L + S)[~obs]) if not mask.is_full else np.zeros(0)
    subgrad = max(float(sub.max(initial=0.0)) * xi, float(off.max(initial=0.0)))
    return {
        "stationarity": stat / scale,
        "subgradient": subgrad / scale,
        "primal": primal / scale,
        "dual": dual,
        "complementary": comp / (scale * (1.0 + delta)),
    }


def subproblem_objective(L, S, q, mask, xi, rho) -> float:
    absS = np.abs(S) if mask is None or mask.is_full else np.abs(S[mask.array])
    return xi * float(absS.sum()) + float(np.linalg.norm(L - q) ** 2) / (2.0 * rho)


# -- outer loop ---------------------------------------------------------------

def mu_schedule(mu0: float, eta: float, K_bar: int, k: int) -> float:
    """Smoothing parameter at iteration k (0-based): shrinks by `eta` K_bar + 1 times."""
    return mu0 * eta ** min(k, K_bar + 1)


def solve_pspg(instance, cfg: Optional[PspgConfig] = None) -> DecompositionResult:
    cfg = cfg or PspgConfig()
    cfg.validate()
    D_obs = instance.D_obs
    mask = instance.mask
    xi = instance.xi
    delta = instance.delta
    ref = spectral_norm(D_obs)
    mu0 = cfg.mu0_factor * ref if ref > 0 else 1.0
    delta_zero = delta <= cfg.delta_zero_cutoff * float(np.linalg.norm(D_obs))
    if instance.rho_noise and not delta_zero:
        stop_tol = cfg.stop_factor * instance.rho_noise
    else:
        stop_tol = cfg.abs_tol

    L_prev = np.zeros_like(D_obs)
    S_prev = D_obs.copy()
    Y = np.zeros_like(D_obs)
    t = 1.0
    svd_count = lsv_count = 0
    history = []
    converged = False
    k = 0
    for k in range(cfg.max_iters):
        mu = mu_schedule(mu0, cfg.eta, cfg.K_bar, k)
        q, stats = compute_q(Y, mu)
        svd_count += 1
        lsv_count += stats.computed
        sol = solve_subproblem(q, D_obs, mask, xi, mu, delta, cfg.delta_zero_cutoff,
                               cfg.theta_tol, cfg.theta_method)
        L, S = sol.L_star, sol.S_star
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        Y = L + ((t - 1.0) / t_next) * (L - L_prev)
        change = math.sqrt(float(np.linalg.norm(L - L_prev)) ** 2
                           + float(np.linalg.norm(S - S_prev)) ** 2)
        size = math.sqrt(float(np.linalg.norm(L_prev)) ** 2 + float(np.linalg.norm(S_prev)) ** 2)
        rel_change = change / (size + 1.0)
        rec = {"iter": k + 1, "mu": mu, "t": t_next, "rank": stats.rank, "theta": sol.theta_star,
               "case": sol.case_tag, "rel_change": rel_change}
        if cfg.verify:
            rec["kkt"] = kkt_residuals(sol, q, D_obs, mask, xi, mu, delta)
        history.append(rec)
        log.debug("pspg iter %d mu=%.3e rank=%d change=%.3e", k + 1, mu, stats.rank, rel_change)
        L_prev, S_prev, t = L, S, t_next
        if not cfg.fixed_budget and rel_change <= stop_tol:
            converged = True
            break
    else:
        converged = cfg.fixed_budget
    if not converged:
        warnings.warn(f"pspg stopped after {k + 1} iterations without reaching tolerance",
                      MaxIterations, stacklevel=2)
    return finish(instance, L_prev, S_prev, "pspg", k + 1, svd_count, lsv_count, converged,
                  history, mu0=mu0, stop_tol=stop_tol, config=asdict(cfg))
