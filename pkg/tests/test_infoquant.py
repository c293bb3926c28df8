import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import logm, sqrtm
from scipy.stats import entropy

from nssim.chanmodel import random_state, random_unitary
from nssim.infoquant import (div_variance, eps_from_root_fidelity, fidelity, joint_spectrum,
                             max_rel_entropy, pinch, pinching_count, pinching_map,
                             purified_distance, rel_entropy, renyi_div_classical, root_fidelity,
                             sandwiched_div, var_bound)

seeds = st.integers(0, 2**31 - 1)


def _sandwiched_direct(rho, sigma, a):
    # straight from the definition with scipy matrix functions
    g = (1 - a) / (2 * a)
    w, v = np.linalg.eigh(sigma)
    sg = (v * w**g) @ v.conj().T
    m = sg @ rho @ sg
    ev = np.clip(np.linalg.eigvalsh((m + m.conj().T) / 2), 0, None)
    return math.log(np.sum(ev**a)) / (a - 1)


def test_classical_relative_entropy_matches_scipy(rng):
    for _ in range(20):
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        assert rel_entropy(p, q) == pytest.approx(entropy(p, q), abs=1e-12)


def test_quantum_relative_entropy_matches_logm(rng):
    for _ in range(10):
        r, s = random_state(3, rng), random_state(3, rng)
        ref = np.real(np.trace(r @ (logm(r) - logm(s))))
        assert rel_entropy(r, s) == pytest.approx(ref, abs=1e-9)


def test_support_leak_gives_inf():
    assert rel_entropy([0.5, 0.5], [1.0, 0.0]) == math.inf
    assert sandwiched_div(np.diag([0.5, 0.5]), np.diag([1.0, 0.0]), 2.0) == math.inf
    assert max_rel_entropy(np.diag([0.5, 0.5]), np.diag([1.0, 0.0])) == math.inf


@given(seeds, st.sampled_from([0.5, 0.7, 1.5, 2.0, 4.0]))
def test_sandwiched_matches_definition(seed, a):
    rng = np.random.default_rng(seed)
    r, s = random_state(3, rng), random_state(3, rng)
    assert sandwiched_div(r, s, a) == pytest.approx(_sandwiched_direct(r, s, a), abs=1e-9)


@given(seeds)
def test_sandwiched_commuting_is_classical(seed):
    rng = np.random.default_rng(seed)
    U = random_unitary(3, rng)
    p, q = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    r, s = (U * p) @ U.conj().T, (U * q) @ U.conj().T
    for a in (0.6, 2.0):
        assert sandwiched_div(r, s, a) == pytest.approx(renyi_div_classical(p, q, a), abs=1e-9)


@given(seeds)
def test_sandwiched_monotone_in_order(seed):
    rng = np.random.default_rng(seed)
    r, s = random_state(3, rng), random_state(3, rng)
    vals = [sandwiched_div(r, s, a) for a in (0.5, 0.8, 1.0, 1.5, 3.0)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= max_rel_entropy(r, s) + 1e-9


def test_fidelity_pure_states(rng):
    for _ in range(10):
        a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        b = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        F = fidelity(np.outer(a, a.conj()), np.outer(b, b.conj()))
        assert F == pytest.approx(abs(np.vdot(a, b)) ** 2, abs=1e-9)


def test_fidelity_against_sqrtm(rng):
    for _ in range(10):
        r, s = random_state(3, rng), random_state(3, rng)
        sr = sqrtm(r)
        ref = np.real(np.trace(sqrtm(sr @ s @ sr))) ** 2
        assert fidelity(r, s) == pytest.approx(ref, abs=1e-9)


def test_purified_distance_and_eps():
    rho = np.eye(2) / 2
    assert purified_distance(rho, rho) == pytest.approx(0.0, abs=1e-9)
    assert eps_from_root_fidelity(1 / math.sqrt(2)) == pytest.approx(1 / math.sqrt(2))
    assert root_fidelity(np.diag([1.0, 0]), np.diag([0, 1.0])) == 0.0


def test_joint_spectrum_and_variance(rng):
    U = random_unitary(4, rng)
    p, w = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    a, b, _ = joint_spectrum((U * p) @ U.conj().T, (U * w) @ U.conj().T)
    assert np.sort(a) == pytest.approx(np.sort(p))
    order = np.argsort(a)
    assert b[order] == pytest.approx(w[np.argsort(p)])
    llr = np.log(p / w)
    var = np.sum(p * llr**2) - np.sum(p * llr) ** 2
    assert div_variance((U * p) @ U.conj().T, (U * w) @ U.conj().T) == pytest.approx(var, abs=1e-10)
    with pytest.raises(ValueError):
        joint_spectrum(random_state(3, rng), random_state(3, rng))


def test_var_bound_value():
    assert var_bound(3, 0.1) == pytest.approx(2 * math.log(3) ** 2 + math.log(0.1) ** 2 + 4)


def test_pinching_basics(rng):
    H = np.diag([1.0, 1.0, 2.0])
    assert pinching_count(H) == 2
    assert pinching_count(np.eye(3)) == 1
    A = random_state(3, rng)
    P = pinch(H, A)
    assert abs(P[0, 2]) == 0 and abs(P[0, 1]) > 0
    pm = pinching_map(H)
    assert np.allclose(sum(pm.projections), np.eye(3))
