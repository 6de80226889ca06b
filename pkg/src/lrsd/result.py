"""Solver output shared by all methods."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lrsd.linalg import nuclear_norm


@dataclass
class DecompositionResult:
    L: np.ndarray
    S: np.ndarray
    solver: str
    iterations: int
    svd_count: int
    lsv_count: int
    objective: float
    infeasibility: float  # ||L + S - P(D)||_F / ||P(D)||_F
    converged: bool
    history: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        s = np.linalg.svd(self.L, compute_uv=False)
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.count_nonzero(s > s[0] * max(self.L.shape) * np.finfo(float).eps))


def objective_value(L, S, instance) -> float:
    """``||L||_* + xi ||P_Omega(S)||_1``."""
    absS = np.abs(S)
    l1 = absS.sum() if instance.mask.is_full else absS[instance.mask.array].sum()
    return nuclear_norm(L) + instance.xi * float(l1)


def relative_infeasibility(L, S, instance) -> float:
    ref = np.linalg.norm(instance.D_obs)
    return float(np.linalg.norm(L + S - instance.D_obs) / (ref if ref > 0 else 1.0))


def finish(instance, L, S, solver, iterations, svd_count, lsv_count, converged,
           history, **extras) -> DecompositionResult:
    return DecompositionResult(
        L=L, S=S, solver=solver, iterations=iterations, svd_count=svd_count,
        lsv_count=lsv_count, objective=objective_value(L, S, instance),
        infeasibility=relative_infeasibility(L, S, instance), converged=converged,
        history=history, extras=extras,
    )
