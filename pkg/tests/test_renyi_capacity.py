import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from nssim.chanmodel import (CqChannel, bsc, constant_channel, identity_channel,
                             product_channel, random_classical_channel, random_cq_channel)
from nssim.renyi_capacity import (bipartite_max_mi, bipartite_smi, max_mi_classical, max_mi_cq,
                                  renyi_mi_classical, renyi_mi_cq)

LOG2 = math.log(2)


def _h(p):
    return -p * math.log(p) - (1 - p) * math.log(1 - p)


def _renyi(p, q, a):
    if a == 1:
        return float(np.sum(p * np.log(p / q)))
    return math.log(np.sum(p**a * q ** (1 - a))) / (a - 1)


def _grid_oracle_2out(Wm, a):
    """min over q in (0,1) of max_x D_a(W_x||(q, 1-q)), by bounded scalar search."""
    def f(t):
        q = np.array([t, 1 - t])
        return max(_renyi(w, q, a) for w in Wm)
    grid = np.linspace(1e-6, 1 - 1e-6, 4001)
    k = int(np.argmin([f(t) for t in grid]))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    return minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}).fun


def test_bsc_shannon_capacity():
    for p in (0.05, 0.1, 0.3):
        res = renyi_mi_classical(bsc(p), 1.0, tol=1e-9)
        assert res.value == pytest.approx(LOG2 - _h(p), abs=1e-9)
        assert res.lower_cert <= LOG2 - _h(p) + 1e-12 <= res.upper_cert + 2e-12


@pytest.mark.parametrize("a", [0.5, 0.7, 1.5, 3.0])
def test_symmetric_channel_closed_form(a):
    # uniform input is optimal for the BSC: Sibson's form evaluated there
    Wm = bsc(0.2).matrix
    ref = a / (a - 1) * math.log(np.sum((0.5 * np.sum(Wm**a, axis=0)) ** (1 / a)))
    assert renyi_mi_classical(bsc(0.2), a, tol=1e-9).value == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("a", [0.5, 0.8, 1.0, 2.0])
def test_random_two_output_against_scalar_search(a, rng):
    for _ in range(3):
        W = random_classical_channel(3, 2, rng)
        assert renyi_mi_classical(W, a, tol=1e-8).value == pytest.approx(
            _grid_oracle_2out(W.matrix, a), abs=1e-7)


def test_identity_and_constant():
    for a in (0.5, 1.0, 2.0, 10.0):
        assert renyi_mi_classical(identity_channel(3), a).value == pytest.approx(math.log(3), abs=1e-7)
        assert renyi_mi_classical(constant_channel([0.2, 0.8]), a).value == pytest.approx(0, abs=1e-7)
    assert max_mi_classical(identity_channel(4)) == pytest.approx(math.log(4))
    assert max_mi_classical(bsc(0.1)) == pytest.approx(math.log(1.8))


def test_alpha_below_half_rejected():
    with pytest.raises(ValueError):
        renyi_mi_classical(bsc(0.1), 0.4)
    with pytest.raises(ValueError):
        renyi_mi_cq(bsc(0.1).as_cq(), 0.3)


@given(st.integers(0, 10**6))
def test_monotone_in_order_and_bracket(seed):
    rng = np.random.default_rng(seed)
    W = random_classical_channel(3, 3, rng)
    vals = []
    for a in (0.5, 0.75, 1.0, 2.0, 5.0):
        r = renyi_mi_classical(W, a, tol=1e-8)
        assert r.lower_cert <= r.upper_cert
        vals.append(r.value)
    assert all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= max_mi_classical(W) + 1e-9


def test_additivity_spot_check(rng):
    W = random_classical_channel(2, 3, rng)
    for a in (0.6, 1.0, 2.0):
        one = renyi_mi_classical(W, a, tol=1e-8).value
        two = renyi_mi_classical(product_channel(W, W), a, tol=1e-8).value
        assert two == pytest.approx(2 * one, abs=3e-8)


def test_cq_diagonal_matches_classical(rng):
    W = random_classical_channel(2, 3, rng)
    for a in (0.5, 1.0, 2.0):
        c = renyi_mi_classical(W, a, tol=1e-8).value
        q = renyi_mi_cq(W.as_cq(), a, tol=1e-7)
        assert q.lower_cert - 1e-7 <= c <= q.upper_cert + 1e-7


def _pure_pair(c):
    a = np.array([1.0, 0.0])
    b = np.array([c, math.sqrt(1 - c * c)])
    return CqChannel([np.outer(a, a), np.outer(b, b)])


def test_cq_pure_states_holevo_and_max():
    for c in (0.0, 0.3, 0.8):
        W = _pure_pair(c)
        ref = _h((1 + c) / 2) if c > 0 else LOG2
        assert renyi_mi_cq(W, 1.0, tol=1e-7).value == pytest.approx(ref, abs=2e-7)
        # smallest trace of S >= both projectors is 1 + half their trace distance
        up, lo = max_mi_cq(W)
        ref_max = math.log(1 + math.sqrt(1 - c * c))
        assert lo - 1e-7 <= ref_max <= up + 1e-7


def test_cq_random_bracket_and_order(rng):
    W = random_cq_channel(2, 2, rng)
    vals = [renyi_mi_cq(W, a, tol=1e-6).value for a in (0.5, 1.0, 2.0)]
    assert vals[0] <= vals[1] + 1e-6 <= vals[2] + 2e-6
    up, lo = max_mi_cq(W)
    assert vals[2] <= up + 1e-6


def test_bipartite_values():
    phi = np.zeros(4)
    phi[0] = phi[3] = 1 / math.sqrt(2)
    bell = np.outer(phi, phi)
    corr = np.diag([0.5, 0, 0, 0.5])
    prod = np.kron(np.diag([0.3, 0.7]), np.diag([0.6, 0.4]))
    for a in (0.7, 2.0):
        assert bipartite_smi(bell, (2, 2), a, tol=1e-7).value == pytest.approx(2 * LOG2, abs=1e-6)
        assert bipartite_smi(corr, (2, 2), a, tol=1e-7).value == pytest.approx(LOG2, abs=1e-6)
        assert bipartite_smi(prod, (2, 2), a, tol=1e-7).value == pytest.approx(0, abs=1e-6)
    up, lo = bipartite_max_mi(bell, (2, 2))
    assert lo - 1e-7 <= 2 * LOG2 <= up + 1e-7
