import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lrsd import linalg
from lrsd.errors import DimensionMismatch
from lrsd.linalg import (ObservationMask, as_matrix, norms, nuclear_norm, partial_svd,
                         project_complement, project_mask, shrink_entries, shrink_singular,
                         spectral_norm)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def matrices(max_side=8):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=finite))


# -- input validation -----------------------------------------------------------

def test_as_matrix_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_matrix(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        as_matrix(np.array([[np.inf]]))
    with pytest.raises(ValueError):
        as_matrix(np.zeros(3))


def test_mask_invariants():
    m = ObservationMask.from_indices((3, 4), [(2, 1), (0, 0), (2, 1)])
    assert m.size == 2 and not m.is_full
    assert m.indices.tolist() == [[0, 0], [2, 1]]
    assert ObservationMask.full((2, 2)).is_full
    assert ObservationMask(np.ones((2, 2), bool)).is_full
    with pytest.raises(ValueError):
        ObservationMask(np.zeros((2, 2), bool))
    with pytest.raises(ValueError):
        ObservationMask.from_indices((2, 2), [(2, 0)])


# -- partial SVD -------------------------------------------------------------------

def test_partial_svd_diagonal():
    F = partial_svd(np.diag([3.0, 1.0, 0.2]), 0.5)
    np.testing.assert_allclose(F.s, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(F.U), np.eye(3)[:, :2], atol=1e-14)
    np.testing.assert_allclose(np.abs(F.Vt), np.eye(3)[:2], atol=1e-14)


def test_partial_svd_threshold_above_spectral_norm(rng):
    X = rng.standard_normal((7, 5))
    F = partial_svd(X, spectral_norm(X) * 1.0001)
    assert F.rank == 0
    assert np.array_equal(F.compose(), np.zeros((7, 5)))


def _subspace_angle(A, B):
    return float(np.max(scipy.linalg.subspace_angles(A, B)))


def test_partial_svd_matches_dense_oracle(rng):
    X = rng.standard_normal((20, 15))
    F = partial_svd(X, 0.0)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    np.testing.assert_allclose(F.s, s, rtol=0, atol=1e-10)
    for i in range(15):
        assert _subspace_angle(F.U[:, [i]], U[:, [i]]) <= 1e-8
        assert _subspace_angle(F.Vt[[i]].T, Vt[[i]].T) <= 1e-8


def test_partial_svd_orthonormal_factors(rng):
    X = rng.standard_normal((30, 12)) @ rng.standard_normal((12, 25))
    F = partial_svd(X, 1.0)
    k = F.rank
    assert np.abs(F.U.T @ F.U - np.eye(k)).max() <= 1e-10
    assert np.abs(F.Vt @ F.Vt.T - np.eye(k)).max() <= 1e-10
    assert np.all(np.diff(F.s) <= 0) and np.all(F.s > 1.0)


def test_partial_svd_iterative_path(rng, monkeypatch):
    # force the Lanczos branch on a small matrix and compare with LAPACK
    monkeypatch.setattr(linalg, "DENSE_SVD_LIMIT", 8)
    A = rng.standard_normal((120, 6)) @ rng.standard_normal((6, 90)) + 1e-3 * rng.standard_normal((120, 90))
    s_ref = np.linalg.svd(A, compute_uv=False)
    thr = 0.5 * (s_ref[5] + s_ref[6])
    F = partial_svd(A, thr)
    assert F.rank == 6
    np.testing.assert_allclose(F.s, s_ref[:6], rtol=1e-10)
    # a threshold needing more than the initial subspace triggers doubling
    F2 = partial_svd(A, 0.5 * s_ref[30])
    np.testing.assert_allclose(F2.s, s_ref[:F2.rank], rtol=1e-8)
    assert F2.rank == int(np.count_nonzero(s_ref > 0.5 * s_ref[30]))


@settings(max_examples=60, deadline=None)
@given(matrices(), st.floats(0, 1))
def test_partial_svd_reconstruction_tail(X, frac):
    s = np.linalg.svd(X, compute_uv=False)
    thr = frac * s[0]
    F = partial_svd(X, thr)
    tail = s[F.rank:]
    assert np.all(tail <= thr * (1 + 1e-12) + 1e-12)
    err = np.linalg.norm(X - F.compose())
    assert err <= np.linalg.norm(tail) + 1e-9 * (1 + s[0])


@settings(max_examples=60, deadline=None)
@given(matrices(max_side=64))
def test_partial_svd_values_match_dense(X):
    F = partial_svd(X, 0.0)
    s = np.linalg.svd(X, compute_uv=False)
    k = F.rank
    scale = max(s[0], 1e-300)
    assert np.all(np.abs(F.s - s[:k]) <= 1e-10 * scale)
    assert np.all(s[k:] <= 1e-10 * scale + 0.0)


# -- shrinkage operators -------------------------------------------------------------

def test_shrink_singular_examples(rng):
    np.testing.assert_allclose(shrink_singular(np.diag([3.0, 1.0, 0.2]), 0.5),
                               np.diag([2.5, 0.5, 0.0]), atol=1e-14)
    X = rng.standard_normal((4, 6))
    np.testing.assert_array_equal(shrink_singular(X, 0.0), X)
    u = rng.standard_normal(5)
    v = rng.standard_normal(3)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    np.testing.assert_allclose(shrink_singular(4 * np.outer(u, v), 1.0), 3 * np.outer(u, v), atol=1e-13)
    with pytest.raises(ValueError):
        shrink_singular(X, -1.0)


def test_shrink_entries_examples(rng):
    X = np.array([[3.0, -0.5], [0.0, 1.0]])
    np.testing.assert_array_equal(shrink_entries(X, 1.0), [[2.0, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(shrink_entries(X, 0.0), X)
    assert np.signbit(shrink_entries(np.array([[0.0]]), 0.0)).sum() == 0


def test_shrink_entries_beats_grid(rng):
    X = rng.standard_normal((3, 3))
    t = 0.7
    S = shrink_entries(X, t)

    def obj(Y):
        return t * np.abs(Y).sum() + 0.5 * ((Y - X) ** 2).sum()

    best = obj(S)
    offsets = np.arange(-10, 11) * 0.01
    # the objective is separable, so a per-entry grid covers the joint grid
    for idx in np.ndindex(3, 3):
        for d in offsets:
            Y = S.copy()
            Y[idx] += d
            assert obj(Y) >= best - 1e-15


def shrink_singular_residual(X, t):
    """Violation of ``(X - L)/t in subdifferential of ||L||_*`` at L = shrink(X, t)."""
    L, F = shrink_singular(X, t, return_factors=True)
    P = (X - L) / t
    k = int(np.count_nonzero(F.s > t))
    U1, V1t = F.U[:, :k], F.Vt[:k]
    r1 = np.abs(P @ V1t.T - U1).max(initial=0.0)
    r2 = np.abs(U1.T @ P - V1t).max(initial=0.0)
    r3 = max(np.linalg.norm(P, 2) - 1.0, 0.0)
    return max(r1, r2, r3)


def shrink_entries_residual(X, t):
    S = shrink_entries(X, t)
    G = (X - S) / t
    nz = S != 0
    return float(np.where(nz, np.abs(G - np.sign(S)), np.maximum(np.abs(G) - 1.0, 0.0)).max())


@settings(max_examples=100, deadline=None)
@given(matrices(), st.floats(0.01, 50))
def test_shrink_optimality_property(X, t):
    assert shrink_entries_residual(X, t) <= 1e-10
    assert shrink_singular_residual(X, t) <= 1e-10 * max(1.0, np.abs(X).max() / t)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 5.0))
def test_shrink_nonexpansive_property(seed, t):
    r = np.random.default_rng(seed)
    m, n = r.integers(1, 9, size=2)
    X, Y = r.standard_normal((2, m, n)) * r.uniform(0.1, 10)
    d = np.linalg.norm(X - Y)
    assert np.linalg.norm(shrink_singular(X, t) - shrink_singular(Y, t)) <= d * (1 + 1e-12)
    assert np.linalg.norm(shrink_entries(X, t) - shrink_entries(Y, t)) <= d * (1 + 1e-12)


# -- projections and norms -------------------------------------------------------------

def test_project_mask_properties(rng):
    X, Y = rng.standard_normal((2, 5, 7))
    mask = ObservationMask(rng.random((5, 7)) < 0.6)
    P = project_mask(X, mask)
    assert np.array_equal(project_mask(P, mask), P)
    assert np.isclose(np.sum(P * Y), np.sum(X * project_mask(Y, mask)), rtol=1e-14)
    assert np.array_equal(P + project_complement(X, mask), X)
    np.testing.assert_allclose(project_mask(2 * X + Y, mask), 2 * P + project_mask(Y, mask))
    assert np.array_equal(project_mask(X, ObservationMask.full(X.shape)), X)
    with pytest.raises(DimensionMismatch):
        project_mask(np.zeros((2, 2)), mask)


def test_norms_examples(rng):
    n = norms(np.diag([3.0, 4.0]))
    assert (n.frobenius, n.spectral, n.nuclear, n.l1, n.linf) == pytest.approx((5, 4, 7, 7, 4))
    z = norms(np.zeros((3, 2)))
    assert all(v == 0 for v in z)
    X = rng.standard_normal((10, 10))
    assert abs(nuclear_norm(X) - np.linalg.svd(X, compute_uv=False).sum()) <= 1e-10
    mask = ObservationMask.from_indices((10, 10), [(0, 0), (3, 4)])
    assert norms(X, mask).l1_masked == pytest.approx(abs(X[0, 0]) + abs(X[3, 4]))
