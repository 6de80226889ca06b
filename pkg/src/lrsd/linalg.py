"""Dense matrix kernel: masks, norms, thresholded partial SVD and shrinkage.

Matrices are plain ``float64`` :class:`numpy.ndarray` objects.  Functions
never modify their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from lrsd import kernels
from lrsd.errors import DimensionMismatch, SvdNonConvergence

#: Above this ``min(m, n)`` the Lanczos (PROPACK) path is used.
DENSE_SVD_LIMIT = 512
#: Relative convergence tolerance handed to the iterative SVD backend.
LANCZOS_TOL = 1e-10


def as_matrix(X, name="X") -> np.ndarray:
    """Return `X` as a finite 2-D float64 array (no copy when possible)."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return A


class ObservationMask:
    """Index set of observed entries.

    Stored as a boolean matrix; ``is_full`` short-circuits projections when
    every entry is observed.  ``indices`` gives the sorted (row-major)
    coordinate list.
    """

    __slots__ = ("_bool", "is_full", "shape")

    def __init__(self, observed: np.ndarray):
        B = np.array(observed, dtype=bool)
        if B.ndim != 2:
            raise DimensionMismatch("mask must be 2-D")
        if not B.any():
            raise ValueError("mask must contain at least one observed entry")
        self._bool = B
        self._bool.setflags(write=False)
        self.shape = B.shape
        self.is_full = bool(B.all())

    @classmethod
    def full(cls, shape) -> "ObservationMask":
        return cls(np.ones(shape, dtype=bool))

    @classmethod
    def from_indices(cls, shape, indices) -> "ObservationMask":
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
        m, n = shape
        if idx.size and (idx.min() < 0 or (idx[:, 0] >= m).any() or (idx[:, 1] >= n).any()):
            raise DimensionMismatch("mask index out of range")
        B = np.zeros(shape, dtype=bool)
        B[idx[:, 0], idx[:, 1]] = True
        return cls(B)

    @property
    def array(self) -> np.ndarray:
        return self._bool

    @property
    def indices(self) -> np.ndarray:
        return np.argwhere(self._bool)

    @property
    def size(self) -> int:
        return int(self._bool.size) if self.is_full else int(np.count_nonzero(self._bool))

    def complement(self) -> np.ndarray:
        return ~self._bool

    def __eq__(self, other):
        return isinstance(other, ObservationMask) and np.array_equal(self._bool, other._bool)

    def __repr__(self):
        return f"ObservationMask(shape={self.shape}, size={self.size}, is_full={self.is_full})"


@dataclass(frozen=True)
class SvdFactors:
    """Singular triplets above a threshold: ``X ~ U @ diag(s) @ Vt``."""

    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.s.size)

    def compose(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        """Return ``U diag(values) Vt`` (``values`` defaults to ``s``)."""
        d = self.s if values is None else values
        if d.size == 0:
            return np.zeros((self.U.shape[0], self.Vt.shape[1]))
        return (self.U * d) @ self.Vt


def _dense_svd(X):
    try:
        return scipy.linalg.svd(X, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        pass
    try:
        # gesvd is slower but more robust when divide-and-conquer fails
        return scipy.linalg.svd(X, full_matrices=False, lapack_driver="gesvd", check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SvdNonConvergence(str(exc)) from exc


def _lanczos_svd(X, threshold):
    # grow the requested subspace until the smallest converged value falls
    # at or below the threshold
    p = min(X.shape)
    k = 10
    while True:
        if k >= p - 1:
            return _dense_svd(X)
        try:
            U, s, Vt = scipy.sparse.linalg.svds(
                X, k=k, solver="propack", tol=LANCZOS_TOL, random_state=0
            )
        except (scipy.sparse.linalg.ArpackNoConvergence, np.linalg.LinAlgError) as exc:
            raise SvdNonConvergence(str(exc)) from exc
        order = np.argsort(s)[::-1]
        U, s, Vt = U[:, order], s[order], Vt[order]
        if s[-1] <= threshold:
            return U, s, Vt
        k *= 2


def partial_svd(X, threshold: float = 0.0) -> SvdFactors:
    """Singular triplets of `X` with singular value strictly above `threshold`.

    Dense LAPACK SVD for ``min(m, n) <= DENSE_SVD_LIMIT``; otherwise a
    PROPACK Lanczos bidiagonalization with subspace doubling starting at 10.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    X = np.asarray(X, dtype=np.float64)
    if min(X.shape) <= DENSE_SVD_LIMIT:
        U, s, Vt = _dense_svd(X)
    else:
        U, s, Vt = _lanczos_svd(X, threshold)
    keep = int(np.count_nonzero(s > threshold))
    # LAPACK returns s sorted, so the kept values are a prefix
    return SvdFactors(np.ascontiguousarray(U[:, :keep]), s[:keep].copy(),
                      np.ascontiguousarray(Vt[:keep]))


def shrink_singular(X, t: float, return_factors: bool = False):
    """Singular value soft-thresholding ``U diag((s - t)_+) V^T``.

    This is the proximal map of ``t * ||.||_*``.  With ``return_factors``
    the thresholded :class:`SvdFactors` of the result are returned as well.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    X = as_matrix(X)
    if t == 0 and not return_factors:
        return X.copy()
    F = partial_svd(X, t)
    shrunk = SvdFactors(F.U, F.s - t, F.Vt)
    out = shrunk.compose()
    return (out, F) if return_factors else out


def shrink_entries(X, t: float) -> np.ndarray:
    """Entrywise soft-thresholding ``sgn(x) max(|x| - t, 0)`` with sgn(0) = 0."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return kernels.soft_threshold(as_matrix(X), float(t))


def project_mask(X, mask: ObservationMask) -> np.ndarray:
    """Zero the entries of `X` outside the observed set."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape != mask.shape:
        raise DimensionMismatch(f"matrix shape {X.shape} does not match mask shape {mask.shape}")
    if mask.is_full:
        return X.copy()
    return np.where(mask.array, X, 0.0)


def project_complement(X, mask: ObservationMask) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape != mask.shape:
        raise DimensionMismatch(f"matrix shape {X.shape} does not match mask shape {mask.shape}")
    if mask.is_full:
        return np.zeros_like(X)
    return np.where(mask.array, 0.0, X)


class Norms(NamedTuple):
    frobenius: float
    spectral: float
    nuclear: float
    l1: float
    l1_masked: float
    linf: float


def norms(X, mask: Optional[ObservationMask] = None) -> Norms:
    """All the matrix norms used by the solvers in one pass over the SVD.

    ``l1_masked`` sums ``|X_ij|`` over `mask` only (equals ``l1`` when no
    mask is given).
    """
    X = as_matrix(X)
    s = scipy.linalg.svdvals(X, check_finite=False)
    absX = np.abs(X)
    l1 = float(absX.sum())
    if mask is None or mask.is_full:
        l1m = l1
    else:
        if mask.shape != X.shape:
            raise DimensionMismatch("mask shape does not match matrix")
        l1m = float(absX[mask.array].sum())
    return Norms(
        frobenius=float(np.linalg.norm(X)),
        spectral=float(s[0]) if s.size else 0.0,
        nuclear=float(s.sum()),
        l1=l1,
        l1_masked=l1m,
        linf=float(absX.max()),
    )


def nuclear_norm(X) -> float:
    return float(scipy.linalg.svdvals(np.asarray(X, dtype=np.float64), check_finite=False).sum())


def spectral_norm(X) -> float:
    X = np.asarray(X, dtype=np.float64)
    if min(X.shape) > DENSE_SVD_LIMIT:
        return float(scipy.sparse.linalg.svds(X, k=1, solver="propack", random_state=0,
                                              return_singular_vectors=False)[0])
    return float(scipy.linalg.svdvals(X, check_finite=False)[0])
