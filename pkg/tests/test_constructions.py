import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nssim.chanmodel import (ClassicalChannel, CqChannel, ValidationError, enumerate_types,
                             identity_channel, random_classical_channel, random_cq_channel,
                             random_state)
from nssim.constructions import (build_cheb_sets, build_ee_smoother, build_sc_classical,
                                 build_sc_quantum_block, quantum_block_classes)
from nssim.infoquant import fidelity


def _cert(rep, text):
    return [c for c in rep.certificates if text in c.name]


def test_ee_output_equal_to_reference_is_untouched():
    sigma = np.diag([0.2, 0.3, 0.5]).astype(complex)
    rep = build_ee_smoother(CqChannel([sigma, sigma]), sigma, M=10.0)
    assert rep.passed
    assert rep.achieved == pytest.approx(0.0, abs=1e-7)
    for Wt in rep.built["channel"].states:
        assert np.allclose(Wt, sigma)


@given(st.integers(0, 10**6), st.floats(1.5, 50.0))
def test_ee_smoother_feasible(seed, M):
    rng = np.random.default_rng(seed)
    W = random_cq_channel(3, 2, rng)
    sigma = random_state(2, rng)
    rep = build_ee_smoother(W, sigma, M)
    for c in rep.certificates:
        if "per-x exponent form" not in c.note:
            assert c.ok, c.name
    for Wx, Wt, P in zip(W.states, rep.built["channel"].states, rep.built["projections"]):
        assert np.linalg.eigvalsh(M * sigma - Wt).min() >= -1e-9
        assert 1 - fidelity(Wx, Wt) <= 2 * np.real(np.trace(Wx @ P)) + 1e-9


def test_ee_stated_form_counterexample():
    W = CqChannel([np.diag([0.3, 0.7, 0.0]).astype(complex)])
    rep = build_ee_smoother(W, np.diag([0.03, 0.1, 0.87]), 31.0, alphas=(64.0,))
    with_factor = _cert(rep, "sqrt(2) exp")
    without = [c for c in rep.certificates if c.note == "per-x exponent form"]
    assert all(c.ok for c in with_factor)
    assert not all(c.ok for c in without)
    assert rep.diagnostics["min_gap_exponent_form"] < 0


def test_ee_rejects_small_M():
    with pytest.raises(ValueError):
        build_ee_smoother(identity_channel(2), [0.5, 0.5], 1.0)


def test_cheb_sets_limits():
    V = W = ClassicalChannel([[0.7, 0.3], [0.2, 0.8]])
    t = enumerate_types(2, 2)[1]
    cs = build_cheb_sets(t, V, W, [0.5, 0.5], 2, 50.0)
    # huge rate: xi = 0 and S is the full support of V^n
    assert cs.xi == 0.0
    assert cs.S.all() and cs.G.all()
    assert cs.mass_S == pytest.approx(1.0)


def test_cheb_sets_support_checks():
    W = ClassicalChannel([[1.0, 0.0], [0.5, 0.5]])
    V = ClassicalChannel([[0.5, 0.5], [0.5, 0.5]])
    t = enumerate_types(1, 2)[0]
    with pytest.raises(ValidationError):
        build_cheb_sets(t, V, W, [0.5, 0.5], 1, 0.1)
    with pytest.raises(ValidationError):
        build_cheb_sets(t, W, W, [0.0, 1.0], 1, 0.1)


@given(st.integers(0, 10**6))
def test_sc_classical_random_instances(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    W = random_classical_channel(2, 3, rng)
    V = random_classical_channel(2, 3, rng)
    q = rng.dirichlet(np.ones(3))
    types = enumerate_types(n, 2)
    rep = build_sc_classical(types[int(rng.integers(len(types)))], V, q, W, n, float(rng.uniform(0, 1)))
    assert rep.passed
    Wt = rep.built["Wt"]
    assert Wt.sum() == pytest.approx(1.0, abs=1e-9)
    assert rep.slack >= -1e-9


def test_sc_classical_identity_degenerate():
    I = identity_channel(2)
    rep = build_sc_classical(enumerate_types(2, 2)[0], I, [0.5, 0.5], I, 2, 0.0)
    assert rep.claims_bound is False
    assert "degenerate_beta" in rep.diagnostics


def test_sc_classical_small_n_coefficient_out_of_range():
    # all Chebyshev masses are 1, yet the coefficient exceeds 1 and the output goes negative
    I = identity_channel(2)
    rep = build_sc_classical(enumerate_types(3, 2)[0], I, [0.5, 0.5], I, 3, 0.1)
    assert rep.built["beta"] > 1
    assert not rep.passed
    assert not _cert(rep, "beta <= 1")[0].ok


def _diag_instance(rng, k, d, groups):
    omega = np.diag(rng.dirichlet(np.ones(d)))
    pool = [np.diag(rng.dirichlet(np.ones(d))) for _ in range(groups)]
    return [pool[int(rng.integers(groups))] for _ in range(k)], omega


def test_quantum_block_all_equal_to_reference():
    omega = np.diag([0.2, 0.3, 0.5])
    rep = build_sc_quantum_block([omega] * 60, omega, 0.0)
    assert rep.claims_bound and rep.passed
    assert rep.diagnostics["xi"] == 0.0


def test_quantum_block_random_and_large_rate(rng):
    V, omega = _diag_instance(rng, 56, 3, 2)
    rep = build_sc_quantum_block(V, omega, 0.05)
    assert rep.claims_bound and rep.passed
    rep = build_sc_quantum_block(V, omega, 20.0)
    assert rep.diagnostics["xi"] == 0.0
    assert rep.passed


def test_quantum_block_report_only():
    omega = np.diag([0.4, 0.6])
    rep = build_sc_quantum_block([np.diag([0.5, 0.5])] * 10, omega, 0.1)
    assert rep.claims_bound is False
    assert rep.diagnostics["report_only"]
    assert rep.passed


def test_quantum_block_errors(rng):
    omega = np.diag([0.2, 0.3, 0.5])
    plus = np.full((3, 3), 1 / 3)
    with pytest.raises(ValidationError):
        build_sc_quantum_block([plus] * 3, omega, 0.1)
    V = [np.diag(rng.dirichlet(np.ones(3))) for _ in range(8)]
    # eight singleton groups, three output types each
    assert quantum_block_classes(V, omega) == 3**8
    with pytest.raises(ValueError):
        build_sc_quantum_block(V, omega, 0.1, class_budget=1000)
    with pytest.raises(ValidationError):
        build_sc_quantum_block([omega], np.diag([0.0, 0.5, 0.5]), 0.1)


def test_report_text():
    sigma = np.eye(2) / 2
    rep = build_ee_smoother(identity_channel(2), sigma, 3.0)
    txt = rep.to_text()
    assert txt.startswith("construction ee-smoother")
    assert "passed" in txt
    assert math.isfinite(rep.min_slack)
