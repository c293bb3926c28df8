import math

import numpy as np
import pytest

from nssim.chanmodel import bsc, identity_channel
from nssim.exponents import (ROUNDING_CONST, ee_achievability_bound, error_exponent, mi_bracket,
                             rounding_ea_size, rounding_sr_ea, sc_achievability_bound_classical,
                             sc_achievability_bound_cq, sc_converse_best, sc_converse_bound,
                             sc_exponent)

LOG2 = math.log(2)


def _bsc_mi(p, a):
    """Order-a information of the BSC at the uniform input (optimal by symmetry)."""
    if a == 1:
        return LOG2 + p * math.log(p) + (1 - p) * math.log(1 - p)
    col = 0.5 * (p**a + (1 - p) ** a)
    return a / (a - 1) * math.log(2 * col ** (1 / a))


def test_closed_form_matches_solver():
    for a in (0.5, 0.9, 1.0, 1.7, 6.0):
        lo, up = mi_bracket(bsc(0.11), a)
        assert lo - 1e-9 <= _bsc_mi(0.11, a) <= up + 1e-9


@pytest.mark.parametrize("r", [0.45, 0.5, 0.55])
def test_error_exponent_against_dense_grid(r):
    p = 0.11
    grid = np.linspace(1e-4, 20, 40001)
    ref = max(0.5 * a * (r - _bsc_mi(p, 1 + a)) for a in grid)
    pt = error_exponent(bsc(p), r)
    assert pt.value == pytest.approx(max(ref, 0.0), abs=1e-6)
    assert pt.value >= ref - 1e-9


@pytest.mark.parametrize("r", [0.05, 0.2, 0.35])
def test_sc_exponent_against_dense_grid(r):
    p = 0.11
    grid = np.linspace(0.5, 1 - 1e-6, 20001)
    ref = max((1 - a) / a * (_bsc_mi(p, a) - r) for a in grid)
    assert sc_exponent(bsc(p), r).value == pytest.approx(max(ref, 0.0), abs=1e-6)


def test_zero_sides_of_capacity():
    C = _bsc_mi(0.11, 1.0)
    assert error_exponent(bsc(0.11), 0.9 * C).value == 0.0
    assert sc_exponent(bsc(0.11), 1.1 * C).value == 0.0
    assert error_exponent(bsc(0.11), 1.05 * C).value > 0
    assert sc_exponent(bsc(0.11), 0.95 * C).value > 0


def test_identity_edge_cases():
    W = identity_channel(2)
    assert error_exponent(W, 0.8).value == math.inf
    assert error_exponent(W, 0.5).value == 0.0
    assert sc_exponent(W, 0.0).value == pytest.approx(LOG2, abs=1e-9)


def test_sc_converse_values():
    assert sc_converse_bound(identity_channel(2), 4, 0.0, 0.5).value == pytest.approx(1 / 16)
    assert sc_converse_bound(identity_channel(2), 4, 0.0, 1.0).value == 1.0
    best = sc_converse_best(bsc(0.1), 10, 0.1)
    assert 0 < best.value <= sc_converse_bound(bsc(0.1), 10, 0.1, 0.5).value + 1e-15
    with pytest.raises(ValueError):
        sc_converse_bound(bsc(0.1), 4, 0.0, 0.3)


def test_sc_converse_uses_lower_certificate():
    lo, _ = mi_bracket(bsc(0.2), 0.5)
    ref = math.exp(-3 * 1.0 * (lo - 0.1))
    assert sc_converse_bound(bsc(0.2), 3, 0.1, 0.5).value == pytest.approx(min(1.0, ref), rel=1e-12)


def test_achievability_readings():
    W = bsc(0.1)
    prop = sc_achievability_bound_classical(W, 8, 0.1)
    lit = sc_achievability_bound_classical(W, 8, 0.1, reading="literal")
    inv = sc_achievability_bound_classical(W, 8, 0.1, reading="inverse")
    for b in (prop, lit, inv):
        assert 0 <= b.value <= 1
    # the inverse reading has the larger log argument, so the smaller prefactor
    assert inv.params["log_prefactor"] < lit.params["log_prefactor"]
    with pytest.raises(ValueError):
        sc_achievability_bound_classical(W, 8, 0.1, reading="other")


def test_achievability_below_converse():
    W = bsc(0.1)
    for n in (4, 16):
        lo = sc_achievability_bound_classical(W, n, 0.2).value
        assert lo <= sc_converse_best(W, n, 0.2).value
        cq = sc_achievability_bound_cq(W.as_cq(), n, 0.2).value
        assert cq <= sc_converse_best(W, n, 0.2).value
    with pytest.raises(ValueError):
        sc_achievability_bound_cq(identity_channel(3).as_cq(), 2, 0.1)


def test_ee_achievability():
    W = bsc(0.11)
    assert ee_achievability_bound(W, 10, 0.1).value == 1.0
    b = ee_achievability_bound(W, 200, 0.6)
    assert 0 < b.value < 1
    # exponent n a/2 (r - I~ - log2/n) at the reported order
    a = b.params["alpha"]
    _, up = mi_bracket(W, 1 + a)
    assert -math.log(b.value) == pytest.approx(100 * a * (0.6 - up - LOG2 / 200), rel=1e-9)


def test_rounding_constants():
    assert ROUNDING_CONST == pytest.approx(0.316060, abs=5e-7)
    assert rounding_sr_ea(0.0) == pytest.approx((0.31606027941, 1.0))
    assert rounding_ea_size(0.0, 1.0, 1.0) == pytest.approx(0.857764, abs=5e-7)
    assert rounding_ea_size(0.2, 1.0, 2.0) == pytest.approx(0.72026, abs=5e-6)
    with pytest.raises(ValueError):
        rounding_ea_size(0.1, 1.0, 0.5)
    with pytest.raises(ValueError):
        rounding_sr_ea(1.5)
