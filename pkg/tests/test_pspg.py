import math
import warnings

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrsd import pspg
from lrsd.alm import solve_alm
from lrsd.errors import InvalidConfig, MaxIterations, ThetaSearchFailure
from lrsd.linalg import ObservationMask, shrink_entries, shrink_singular
from lrsd.problems import Instance, gen_rpcp_missing, gen_spcp
from lrsd.pspg import (BOUNDARY, DELTA_ZERO, INTERIOR, PspgConfig, compute_q, find_theta,
                       kkt_residuals, mu_schedule, phi, solve_pspg, solve_subproblem,
                       subproblem_objective)
from lrsd.smoothing import grad_f_mu


# -- q and the multiplier search ----------------------------------------------------

def test_compute_q_examples(rng):
    q, stats = compute_q(np.diag([3.0, 1.0, 0.2]), 0.5)
    np.testing.assert_allclose(q, np.diag([2.5, 0.5, 0.0]), atol=1e-14)
    assert stats.rank == 2
    Y = rng.standard_normal((9, 7))
    q, _ = compute_q(Y, 0.8)
    np.testing.assert_allclose(q, Y - 0.8 * grad_f_mu(Y, 0.8), atol=1e-12)
    with pytest.raises(ValueError):
        compute_q(Y, 0.0)


def _random_theta_data(r, n=None):
    n = n or int(r.integers(1, 80))
    a = np.sort(np.abs(r.standard_normal(n)) * r.uniform(0.1, 10))
    xi, rho = r.uniform(0.01, 2), r.uniform(0.01, 5)
    delta = r.uniform(0.01, 0.99) * np.linalg.norm(a)
    return a, xi, rho, delta


def bisection_theta(a, xi, rho, delta):
    lo, hi = math.log(1e-12), math.log(1e12)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if phi(math.exp(mid), a, xi, rho) > delta:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def test_find_theta_trivial_case():
    a = np.array([0.1, 0.2, 0.3])
    assert find_theta(a, 0.5, 1.0, 1.0) == 0.0
    assert find_theta(a, 0.5, 1.0, float(np.linalg.norm(a))) == 0.0


def test_find_theta_all_uncapped_closed_form(rng):
    a = np.sort(rng.uniform(0, 1, 30))
    rho, delta = 0.7, 0.5 * np.linalg.norm(a)
    theta = find_theta(a, 10.0, rho, delta)
    assert theta == pytest.approx((np.linalg.norm(a) / delta - 1) / rho, rel=1e-12)


def test_find_theta_matches_bisection_oracle(rng):
    D = rng.standard_normal((5, 5))
    q = rng.standard_normal((5, 5))
    mask = ObservationMask(rng.random((5, 5)) < 0.7)
    a = np.sort(np.abs((D - q)[mask.array]))
    xi, rho, delta = 0.2, 0.7, 0.3
    theta = find_theta(a, xi, rho, delta)
    assert theta == pytest.approx(bisection_theta(a, xi, rho, delta), rel=1e-9)
    assert phi(theta, a, xi, rho) == pytest.approx(delta, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_find_theta_random_against_oracle(seed):
    a, xi, rho, delta = _random_theta_data(np.random.default_rng(seed))
    theta = find_theta(a, xi, rho, delta)
    ref = bisection_theta(a, xi, rho, delta)
    assert theta == pytest.approx(ref, rel=1e-8)
    assert find_theta(a, xi, rho, delta, method="quartic") == pytest.approx(theta, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-6, 6))
def test_prefix_sum_phi_matches_direct(seed, log_theta):
    a, xi, rho, _ = _random_theta_data(np.random.default_rng(seed))
    theta = 10.0**log_theta
    s = 1.0 / theta
    j = int(np.searchsorted(a, xi * (s + rho), side="right"))  # entries below the cap
    p = float(np.cumsum(a * a)[j - 1]) if j else 0.0
    fast = pspg._phi_s(s, p, (a.size - j) * xi * xi, rho)
    direct = phi(theta, a, xi, rho)
    assert fast == pytest.approx(direct, rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_phi_decreasing(seed):
    a, xi, rho, _ = _random_theta_data(np.random.default_rng(seed))
    thetas = np.logspace(-4, 4, 50)
    vals = [phi(t, a, xi, rho) for t in thetas]
    assert all(y <= x * (1 + 1e-15) for x, y in zip(vals, vals[1:]))


def test_find_theta_input_checks():
    with pytest.raises(ValueError):
        find_theta(np.array([0.3, 0.1]), 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        find_theta(np.array([0.1]), 1.0, 1.0, 0.0)
    assert issubclass(ThetaSearchFailure, RuntimeError)


# -- subproblem --------------------------------------------------------------------

def cvxpy_subproblem(q, D, mask, xi, rho, delta):
    L = cp.Variable(q.shape)
    S = cp.Variable(q.shape)
    W = mask.array.astype(float)
    obj = xi * cp.sum(cp.abs(cp.multiply(W, S))) + cp.sum_squares(L - q) / (2 * rho)
    R = cp.multiply(W, L + S - D)
    cons = [cp.multiply(1 - W, L + S) == 0]
    cons.append(R == 0 if delta == 0 else cp.norm(R, "fro") <= delta)
    prob = cp.Problem(cp.Minimize(obj), cons)
    with warnings.catch_warnings():
        # tight tolerances make the solver flag "inaccurate" near 1e-10; values are compared
        warnings.simplefilter("ignore", UserWarning)
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12,
                   max_iter=500)
    return prob.value


def test_subproblem_interior_example(rng):
    q, D = rng.standard_normal((2, 4, 5))
    mask = ObservationMask(rng.random((4, 5)) < 0.6)
    sol = solve_subproblem(q, D, mask, 0.3, 0.5, 100.0)
    assert sol.case_tag == INTERIOR and sol.theta_star == 0
    np.testing.assert_array_equal(sol.L_star, q)
    np.testing.assert_array_equal(sol.S_star, np.where(mask.array, 0.0, -q))


def test_subproblem_delta_zero_example(rng):
    D = rng.standard_normal((4, 5))
    mask = ObservationMask(rng.random((4, 5)) < 0.6)
    D_obs = np.where(mask.array, D, 0.0)
    xi, rho = 0.3, 0.5
    sol = solve_subproblem(np.zeros_like(D), D, mask, xi, rho, 0.0)
    assert sol.case_tag == DELTA_ZERO and sol.theta_star == math.inf
    S = shrink_entries(D_obs, xi * rho)
    np.testing.assert_allclose(sol.S_star, S, atol=1e-15)
    np.testing.assert_allclose(sol.L_star, D_obs - S, atol=1e-15)


def _oracle_case(r, kind):
    m, n = 6, 6
    q, D = r.standard_normal((2, m, n)) * r.uniform(0.2, 5)
    mask = ObservationMask(r.random((m, n)) < r.uniform(0.5, 1.0)) if r.random() < 0.6 \
        else ObservationMask.full((m, n))
    xi, rho = r.uniform(0.05, 1.0), r.uniform(0.05, 2.0)
    gap = float(np.linalg.norm(np.where(mask.array, D - q, 0.0)))
    delta = {"boundary": r.uniform(0.05, 0.95) * gap, "interior": r.uniform(1.0, 2.0) * gap,
             "zero": 0.0}[kind]
    return q, D, mask, xi, rho, delta


@pytest.mark.parametrize("block", range(10))
def test_subproblem_against_cvxpy(block):
    r = np.random.default_rng(1000 + block)
    for i in range(10):
        kind = ("boundary", "boundary", "interior", "zero")[i % 4]
        q, D, mask, xi, rho, delta = _oracle_case(r, kind)
        sol = solve_subproblem(q, D, mask, xi, rho, delta)
        ours = subproblem_objective(sol.L_star, sol.S_star, q, mask, xi, rho)
        ref = cvxpy_subproblem(q, D, mask, xi, rho, delta)
        assert ours <= ref + 1e-6 * max(1.0, abs(ref))
        assert ours == pytest.approx(ref, rel=1e-6, abs=1e-9)
        kkt = kkt_residuals(sol, q, D, mask, xi, rho, delta)
        assert max(kkt.values()) <= 1e-8, kkt
        R = np.where(mask.array, sol.L_star + sol.S_star - D, 0.0)
        assert np.linalg.norm(R) <= delta * (1 + 1e-9) + 1e-14 * np.linalg.norm(D)
        assert not (sol.L_star + sol.S_star)[~mask.array].any()


def test_subproblem_shape_errors():
    with pytest.raises(ValueError):
        solve_subproblem(np.zeros((2, 2)), np.zeros((2, 3)), None, 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        solve_subproblem(np.zeros((2, 2)), np.zeros((2, 2)), None, 1.0, 1.0, -0.1)


# -- outer loop --------------------------------------------------------------------

def test_mu_schedule():
    assert mu_schedule(1.0, 0.5, 2, 0) == 1.0
    assert mu_schedule(1.0, 0.5, 2, 3) == 0.125
    assert mu_schedule(1.0, 0.5, 2, 50) == 0.125


def _record_subproblems(monkeypatch):
    seen = []
    real = pspg.solve_subproblem

    def spy(*args, **kw):
        sol = real(*args, **kw)
        seen.append(sol)
        return sol

    monkeypatch.setattr(pspg, "solve_subproblem", spy)
    return seen


def test_iterates_stay_feasible(monkeypatch):
    inst = gen_spcp(40, 0.1, 0.05, 30, seed=1)
    mask = ObservationMask(np.random.default_rng(0).random(inst.shape) < 0.8)
    inst = Instance(inst.D, mask, inst.delta * 0.9, inst.xi, inst.rho_noise, inst.ground_truth)
    seen = _record_subproblems(monkeypatch)
    res = solve_pspg(inst, PspgConfig(verify=True))
    assert len(seen) == res.iterations
    cases = set()
    for sol in seen:
        R = np.where(mask.array, sol.L_star + sol.S_star - inst.D_obs, 0.0)
        assert np.linalg.norm(R) <= inst.delta * (1 + 1e-9)
        assert not (sol.L_star + sol.S_star)[~mask.array].any()
        cases.add(sol.case_tag)
    assert BOUNDARY in cases
    worst = max(max(h["kkt"].values()) for h in res.history)
    assert worst <= 1e-8


def test_momentum_sequence():
    res = solve_pspg(gen_spcp(30, 0.1, 0.05, 45, seed=0))
    for h in res.history:
        assert h["t"] >= (h["iter"] + 2) / 2


def test_delta_zero_matches_alm():
    inst = gen_rpcp_missing(200, 0.05, 0.05, 1.0, seed=0)
    a, b = solve_pspg(inst), solve_alm(inst)
    assert a.history[0]["case"] == DELTA_ZERO
    assert np.linalg.norm(a.L - b.L) <= 1e-3 * np.linalg.norm(b.L)


def test_rank_one_recovery():
    D = gen_rpcp_missing(20, 0.05, 0.05, 1.0, seed=0).ground_truth.L0
    res = solve_pspg(Instance.from_matrix(D))
    assert res.converged
    assert np.linalg.norm(res.L - D) <= 1e-6 * np.linalg.norm(D)


def test_stopping_rule_uses_noise_level():
    inst = gen_spcp(30, 0.1, 0.05, 45, seed=0)
    res = solve_pspg(inst)
    assert res.extras["stop_tol"] == pytest.approx(0.05 * inst.rho_noise)
    assert res.history[-1]["rel_change"] <= res.extras["stop_tol"]
    # without a noise level the absolute tolerance applies; the run need not reach it
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MaxIterations)
        res = solve_pspg(Instance.from_matrix(inst.D, delta=0.1), PspgConfig(max_iters=50))
    assert res.extras["stop_tol"] == 1e-7


def test_fixed_budget_and_max_iterations():
    inst = gen_spcp(30, 0.1, 0.05, 45, seed=0)
    res = solve_pspg(inst, PspgConfig(fixed_budget=True, max_iters=7))
    assert res.iterations == 7 and res.converged
    with pytest.warns(MaxIterations):
        res = solve_pspg(inst, PspgConfig(max_iters=2))
    assert not res.converged


def test_config_errors():
    inst = gen_spcp(20, 0.1, 0.05, 45, seed=0)
    for bad in (dict(eta=0.0), dict(theta_method="ferrari"), dict(stop_factor=0.0),
                dict(max_iters=0)):
        with pytest.raises(InvalidConfig):
            solve_pspg(inst, PspgConfig(**bad))


def test_quartic_path_end_to_end():
    inst = gen_spcp(40, 0.1, 0.05, 45, seed=2)
    a = solve_pspg(inst)
    b = solve_pspg(inst, PspgConfig(theta_method="quartic"))
    assert a.iterations == b.iterations
    assert np.linalg.norm(a.L - b.L) <= 1e-8 * np.linalg.norm(a.L)
    assert shrink_singular(a.L, 0.0).shape == a.L.shape
