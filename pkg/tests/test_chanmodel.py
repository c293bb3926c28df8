import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nssim.chanmodel import (ClassicalChannel, CqChannel, DimensionOverflowError, TypeClass,
                             ValidationError, all_sequences, bsc, check_entries, density_matrix,
                             enumerate_types, get_entry_cap, identity_channel, in_support_class,
                             index_to_seq, load_channel, parse_channel, prob_dist,
                             product_channel, random_classical_channel, random_cq_channel,
                             representative_sequence, save_channel, seq_to_index, set_entry_cap,
                             tensor_power_classical, tensor_power_cq, type_labels, type_of)


def test_prob_dist_clamps_tiny_negatives():
    p = prob_dist([0.5, 0.5 + 5e-13, -5e-13])
    assert p[2] == 0.0


@pytest.mark.parametrize("bad", [[0.5, 0.6], [1.2, -0.2], [np.nan, 1.0], []])
def test_prob_dist_rejects(bad):
    with pytest.raises(ValidationError):
        prob_dist(bad)


def test_density_matrix_checks():
    with pytest.raises(ValidationError):
        density_matrix([[1, 0.1], [0, 0]])
    with pytest.raises(ValidationError):
        density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValidationError):
        density_matrix(np.eye(2))
    rho = density_matrix(np.eye(2) / 2)
    assert rho.dtype == complex


def test_channel_validation():
    with pytest.raises(ValidationError):
        ClassicalChannel([[0.5, 0.4]])
    with pytest.raises(ValidationError):
        CqChannel([np.eye(2) / 2, np.eye(3) / 3])
    assert bsc(0.2).matrix[0, 1] == pytest.approx(0.2)
    assert identity_channel(3).w_min == 1.0


def test_sequence_indexing_is_little_endian():
    seqs = all_sequences(3, 2)
    assert tuple(seqs[1]) == (1, 0)
    assert tuple(seqs[3]) == (0, 1)
    for i in range(27):
        assert seq_to_index(index_to_seq(i, 3, 3), 3) == i


def test_tensor_power_matches_products(rng):
    W = random_classical_channel(2, 3, rng)
    W3 = tensor_power_classical(W, 3).matrix
    for xi, x in enumerate(all_sequences(2, 3)):
        for yi, y in enumerate(all_sequences(3, 3)):
            assert W3[xi, yi] == pytest.approx(np.prod([W.matrix[a, b] for a, b in zip(x, y)]))


def test_tensor_power_cq_ordering(rng):
    W = random_cq_channel(2, 2, rng)
    W2 = tensor_power_cq(W, 2)
    # x = (x_0, x_1) = (1, 0) has index 1 and state W[x_1] (x) W[x_0]
    assert np.allclose(W2.states[1], np.kron(W.states[0], W.states[1]))


def test_product_channel_matches_tensor_power(rng):
    W = random_classical_channel(2, 2, rng)
    assert np.allclose(product_channel(W, W).matrix, tensor_power_classical(W, 2).matrix)


def test_entry_cap():
    old = get_entry_cap()
    try:
        set_entry_cap(100)
        with pytest.raises(DimensionOverflowError):
            check_entries(101)
        with pytest.raises(DimensionOverflowError):
            tensor_power_classical(identity_channel(2), 4)
    finally:
        set_entry_cap(old)


@given(st.integers(1, 6), st.integers(1, 4))
def test_type_enumeration_counts(n, k):
    types = enumerate_types(n, k)
    assert len(types) == math.comb(n + k - 1, k - 1)
    assert sum(t.size() for t in types) == k**n
    assert len({t.counts for t in types}) == len(types)


def test_type_labels_and_representatives():
    labels, types = type_labels(2, 3)
    for i, seq in enumerate(all_sequences(2, 3)):
        assert types[labels[i]] == type_of(seq, 2)
    assert representative_sequence(TypeClass((2, 1))) == (0, 0, 1)


def test_in_support_class():
    W = ClassicalChannel([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
    assert in_support_class(W, W)
    assert in_support_class(ClassicalChannel([[1, 0, 0], [0, 1, 0]]), W)
    assert not in_support_class(ClassicalChannel([[0, 0, 1], [0, 1, 0]]), W)


def test_channel_files_roundtrip(tmp_path, rng):
    for W in (random_classical_channel(2, 3, rng), random_cq_channel(3, 2, rng)):
        path = tmp_path / "w.json"
        save_channel(W, path)
        W2 = load_channel(path)
        a = W.matrix if isinstance(W, ClassicalChannel) else W.states
        b = W2.matrix if isinstance(W2, ClassicalChannel) else W2.states
        assert np.allclose(a, b)


def test_parse_errors_report_first_violation(tmp_path):
    with pytest.raises(ValidationError, match="kind"):
        parse_channel({"matrix": [[1]]})
    with pytest.raises(ValidationError, match="row 1"):
        parse_channel({"kind": "classical", "matrix": [[1, 0], [0.5, 0.6]]})
    with pytest.raises(ValidationError, match="shape"):
        parse_channel({"kind": "cq", "dim": 2, "states": [{"re": [[1]]}]})
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "classical",\n "matrix": [[1, 0],]}')
    with pytest.raises(ValidationError, match="line 2"):
        load_channel(p)
