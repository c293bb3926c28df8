import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nssim.chanmodel import (CqChannel, bsc, constant_channel, identity_channel,
                             random_classical_channel, random_cq_channel, tensor_power_classical)
from nssim.ns_solver import (minimax_check, ns_error_blocklength, ns_error_classical, ns_error_cq,
                             waterfill)


def _cvx_simulation(Wm, M):
    """Independent conic formulation: max t s.t. sum_y sqrt(W u_x) >= t for all x.

    Returns the optimal root fidelity ``t``; comparing on this scale avoids the
    square-root blow-up of solver noise in ``sqrt(1 - t^2)`` near ``t = 1``.
    """
    nx, ny = Wm.shape
    U = cp.Variable((nx, ny), nonneg=True)
    q = cp.Variable(ny, nonneg=True)
    t = cp.Variable()
    cons = [cp.sum(q) == 1, cp.sum(U, axis=1) == 1]
    for x in range(nx):
        cons += [U[x] <= M * q, cp.sum(cp.sqrt(cp.multiply(Wm[x], U[x]))) >= t]
    cp.Problem(cp.Maximize(t), cons).solve(solver=cp.CLARABEL)
    return float(t.value)


def _cvx_waterfill(w, c):
    u = cp.Variable(len(w), nonneg=True)
    p = cp.Problem(cp.Maximize(cp.sum(cp.sqrt(cp.multiply(w, u)))), [cp.sum(u) == 1, u <= c])
    p.solve(solver=cp.CLARABEL)
    return p.value


@given(st.integers(0, 10**6), st.floats(1.0, 3.0))
def test_waterfill_against_conic_oracle(seed, scale):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(4))
    c = rng.dirichlet(np.ones(4)) * scale
    val, u, mu = waterfill(w, c)
    assert np.all(u >= -1e-15) and np.all(u <= c + 1e-12)
    assert u.sum() == pytest.approx(1.0, abs=1e-12)
    assert val[0] == pytest.approx(_cvx_waterfill(w, c), abs=1e-6)
    assert np.all(mu >= 0)


def test_waterfill_uncapped_is_one():
    w = np.array([[0.2, 0.3, 0.5]])
    val, u, _ = waterfill(w, np.array([0.5, 0.5, 0.5]))
    assert val[0] == pytest.approx(1.0)
    assert u == pytest.approx(w)


@pytest.mark.parametrize("M", [1.0, 1.5, 2.0])
def test_classical_against_conic_oracle(M, rng):
    for _ in range(3):
        W = random_classical_channel(3, 3, rng)
        sol = ns_error_classical(W, M, tol=1e-7)
        ref = _cvx_simulation(W.matrix, M)
        assert math.sqrt(sol.fidelity_lb) - 1e-7 <= ref <= math.sqrt(sol.fidelity_ub) + 1e-7
        assert sol.width <= 1e-6


def test_identity_values():
    assert ns_error_classical(identity_channel(2), 1.0).eps == pytest.approx(1 / math.sqrt(2), abs=1e-7)
    assert ns_error_classical(identity_channel(3), 3.0).eps == pytest.approx(0.0, abs=1e-9)
    assert ns_error_classical(constant_channel([0.3, 0.7]), 1.0).eps == pytest.approx(0.0, abs=1e-9)
    # with M >= sum_y max_x W the simulation is exact
    assert ns_error_classical(bsc(0.1), 1.8).eps == pytest.approx(0.0, abs=1e-9)


def test_reported_simulation_is_feasible(rng):
    W = random_classical_channel(3, 4, rng)
    sol = ns_error_classical(W, 1.7)
    Wt = sol.channel.matrix
    assert np.all(Wt <= 1.7 * sol.reference[None, :] + 1e-12)
    assert Wt.sum(axis=1) == pytest.approx(np.ones(3))
    assert sol.diagnostics["constraint_slack"] >= -1e-12


def test_blocklength_identity_and_oracle(rng):
    sol = ns_error_blocklength(identity_channel(2), 2, 0.0)
    assert sol.eps == pytest.approx(math.sqrt(3) / 2, abs=1e-7)
    W = random_classical_channel(2, 2, rng)
    for r in (0.1, 0.3):
        sol = ns_error_blocklength(W, 2, r, tol=1e-7)
        ref = _cvx_simulation(tensor_power_classical(W, 2).matrix, math.exp(2 * r))
        assert math.sqrt(sol.fidelity_lb) - 1e-7 <= ref <= math.sqrt(sol.fidelity_ub) + 1e-7


def test_product_reference_is_only_a_lower_fidelity(rng):
    W = random_classical_channel(2, 2, rng)
    full = ns_error_blocklength(W, 3, 0.2)
    prod = ns_error_blocklength(W, 3, 0.2, symmetric_q=True)
    assert prod.fidelity_ub == 1.0
    assert prod.fidelity_lb <= full.fidelity_ub + 1e-9


def test_cq_diagonal_matches_classical(rng):
    W = random_classical_channel(2, 2, rng)
    c = ns_error_classical(W, 1.3, tol=1e-7)
    q = ns_error_cq(W.as_cq(), 1.3, tol=1e-6)
    assert q.eps_lb - 1e-6 <= c.eps_ub and c.eps_lb <= q.eps_ub + 1e-6


def test_cq_orthogonal_and_identical_states():
    W = identity_channel(2).as_cq()
    assert ns_error_cq(W, 1.0).eps == pytest.approx(1 / math.sqrt(2), abs=1e-6)
    rho = np.diag([0.4, 0.6]).astype(complex)
    assert ns_error_cq(CqChannel([rho, rho]), 1.0).eps == pytest.approx(0.0, abs=1e-6)


def test_cq_bracket_is_ordered(rng):
    W = random_cq_channel(2, 2, rng)
    sol = ns_error_cq(W, 1.2)
    assert sol.eps_lb <= sol.eps_ub
    assert sol.width <= 1e-5


def test_cq_blocklength_identity():
    sol = ns_error_blocklength(identity_channel(2).as_cq(), 2, 0.0)
    assert sol.eps == pytest.approx(math.sqrt(3) / 2, abs=1e-6)


def test_minimax_orderings_agree():
    out = minimax_check(identity_channel(2), 1.0, grid=8, refine=2)
    assert out["difference"] <= 1e-4
    out = minimax_check(bsc(0.2), 1.2, grid=8, refine=2)
    assert out["difference"] <= 1e-4


def test_bad_arguments():
    with pytest.raises(ValueError):
        ns_error_classical(bsc(0.1), 0.5)
    with pytest.raises(ValueError):
        ns_error_blocklength(bsc(0.1), 0, 0.1)
    with pytest.raises(ValueError):
        ns_error_blocklength(bsc(0.1), 2, -0.1)
