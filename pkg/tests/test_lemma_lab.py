import math

import numpy as np
import pytest

from nssim import lemma_lab
from nssim.chanmodel import ValidationError, identity_channel, random_state
from nssim.lemma_lab import (SUITES, VerificationRun, run_suite, shrink, verify_fid_kl,
                             verify_holder_boundary, verify_holder_sc, verify_multiblock_fidelity,
                             verify_pinching, verify_sandwich_suite, verify_var_bound)

PLUS = np.full((2, 2), 0.5, complex)
BLOCKS = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]


def test_trivial_instances(rng):
    sigma = random_state(3, rng)
    assert verify_pinching(sigma, np.eye(3)) == pytest.approx(0.0, abs=1e-12)
    rho = random_state(2, rng)
    # tau = rho = sigma gives F = 1 and exp(0) = 1
    assert verify_fid_kl(rho, rho, rho) == pytest.approx(0.0, abs=1e-9)
    w = np.diag([0.25, 0.75])
    assert verify_var_bound(w, w) == pytest.approx(2 * math.log(2) ** 2 + math.log(0.25) ** 2 + 4)


def test_multiblock_counterexample():
    sig = np.eye(2) / 2
    # root-fidelity form is tight here: sqrt(2) * sqrt(1/2) - 1
    assert verify_multiblock_fidelity(PLUS, sig, BLOCKS) == pytest.approx(0.0, abs=1e-9)
    assert verify_multiblock_fidelity(PLUS, sig, BLOCKS, squared=True) == pytest.approx(
        math.sqrt(2) / 2 - 1, abs=1e-9)


def test_multiblock_rejects_bad_blocks():
    with pytest.raises(ValidationError):
        verify_multiblock_fidelity(PLUS, np.eye(2) / 2, [np.diag([1.0, 0.0])])
    with pytest.raises(ValidationError):
        verify_multiblock_fidelity(PLUS, PLUS, BLOCKS)


def test_holder_equal_states_nonnegative(rng):
    rho = random_state(4, rng)
    for a in (0.6, 0.9):
        assert verify_holder_sc(rho, rho, a) >= -1e-6
    assert verify_holder_boundary(rho, rho) >= -1e-6
    with pytest.raises(ValueError):
        verify_holder_sc(rho, rho, 0.5)


@pytest.mark.parametrize("suite", ["pinching", "fidkl", "varbound", "multiblock"])
def test_suites_pass_and_are_seeded(suite):
    a = run_suite(suite, trials=40, seed=3)
    b = run_suite(suite, trials=40, seed=3, workers=2)
    assert a.passed
    assert np.array_equal(a.slacks, b.slacks)
    assert sum(c for _, _, c in a.histogram()) == 40


def test_holder_suite_small():
    run = run_suite("holder", trials=5, seed=1)
    assert run.passed, run.to_text()


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("nope")


def test_failures_are_shrunk(monkeypatch):
    gen, _, base, tol = SUITES["multiblock"]
    check = lambda i: verify_multiblock_fidelity(i["rho"], i["sigma"], i["projs"], squared=True)
    monkeypatch.setitem(SUITES, "squared", (gen, check, base, tol))
    run = run_suite("squared", trials=30, seed=0)
    assert not run.passed and run.status == "FAIL"
    assert run.shrunk
    for sh in run.shrunk:
        assert 0 < sh["t"] <= 1
        assert check(sh["instance"]) < -tol
    assert "failure" in run.to_text()


def test_shrink_direct_on_counterexample(monkeypatch):
    inst = {"rho": PLUS, "sigma": np.eye(2) / 2, "projs": BLOCKS}
    gen, _, base, tol = SUITES["multiblock"]
    check = lambda i: verify_multiblock_fidelity(i["rho"], i["sigma"], i["projs"], squared=True)
    monkeypatch.setitem(SUITES, "squared", (gen, check, base, tol))
    sh = shrink("squared", inst)
    assert sh["slack"] <= math.sqrt(2) / 2 - 1 + 1e-12
    assert sh["t"] < 1
    assert check(sh["instance"]) < -tol


def test_near_tolerance_flag():
    run = VerificationRun("x", 3, 0, 1e-6, np.array([1.0, 5e-6, 0.2]))
    assert run.passed and run.near_tolerance
    assert run.status == "PASS (near tolerance)"
    run = VerificationRun("x", 2, 0, 1e-6, np.array([1.0, 0.5]))
    assert run.status == "PASS"
    d = run.to_dict()
    assert d["min_slack"] == 0.5 and len(d["histogram"]) == len(lemma_lab._HIST_EDGES) - 1


def test_sandwich_identity():
    run = verify_sandwich_suite(identity_channel(2), 3, [0.0, 0.3, 0.8])
    assert run.passed, run.to_text()
    assert len(run.cells) == 9
    cell = [c for c in run.cells if c["n"] == 2 and c["r"] == 0.0][0]
    assert cell["eps_lb"] == pytest.approx(math.sqrt(3) / 2, abs=1e-6)
