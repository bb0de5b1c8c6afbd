import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis.extra.numpy import arrays

import oracles
from piggyrs import linalg
from piggyrs.errors import DimensionMismatch, DuplicateEvaluationPoint, SingularMatrix


def square(n):
    return arrays(np.uint8, (n, n))


def test_vandermonde_rows():
    v = linalg.vandermonde([0, 1, 2, 3], 3)
    assert v.tolist() == [[1, 0, 0], [1, 1, 1], [1, 2, 4], [1, 3, 5]]


def test_vandermonde_rejects_duplicates():
    with pytest.raises(DuplicateEvaluationPoint):
        linalg.vandermonde([1, 2, 1], 2)


def test_systematize_golden(fixtures):
    gen = linalg.systematize(linalg.vandermonde([0, 1, 2, 3], 2))
    golden = linalg.parse_hex_matrix((fixtures / "systematized_vandermonde_4x2.hex").read_text())
    assert np.array_equal(gen.matrix, golden)
    assert (gen.k, gen.r) == (2, 2)


@pytest.mark.parametrize("k,r", [(2, 2), (10, 4)])
def test_generator_golden(fixtures, k, r):
    golden = linalg.parse_hex_matrix((fixtures / f"generator_{k}_{r}.hex").read_text())
    gen = linalg.rs_generator(k, r)
    assert np.array_equal(gen.matrix, golden)
    assert np.array_equal(gen.parity, golden[k:])
    assert linalg.format_hex_matrix(gen.matrix) == (fixtures / f"generator_{k}_{r}.hex").read_text()


def test_toy_generator_coefficients():
    assert linalg.rs_generator(2, 2).parity.tolist() == [[1, 1], [1, 2]]


def test_generator_10_4_is_mds():
    assert linalg.is_mds(linalg.rs_generator(10, 4))


def test_all_minors_nonzero_by_oracle_determinant():
    p = linalg.rs_generator(10, 4).parity.tolist()
    for s in range(1, 5):
        for rows in itertools.combinations(range(4), s):
            for cols in itertools.combinations(range(10), s):
                assert oracles.det([[p[i][j] for j in cols] for i in rows]) != 0


@pytest.mark.parametrize("k,r", [(1, 1), (3, 1), (6, 3), (12, 5), (8, 6)])
def test_generators_are_mds(k, r):
    gen = linalg.rs_generator(k, r)
    assert np.array_equal(gen.matrix[:k], linalg.identity(k))
    assert linalg.is_superregular(gen.parity)


def test_fallback_when_direct_form_fails():
    # the g^(ij) parity block has a singular minor for r = 5 once k >= 6
    assert not linalg.is_superregular(linalg.parity_vandermonde(6, 5))
    gen = linalg.rs_generator(6, 5)
    assert linalg.is_mds(gen)


def test_singular_matrix_raises():
    with pytest.raises(SingularMatrix):
        linalg.invert(np.array([[1, 2], [2, 4]], dtype=np.uint8))
    with pytest.raises(SingularMatrix):
        linalg.invert(np.zeros((3, 3), dtype=np.uint8))


def test_non_square_raises():
    with pytest.raises(DimensionMismatch):
        linalg.invert(np.ones((2, 3), dtype=np.uint8))


def test_pivoting_needed():
    m = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    assert linalg.invert(m).tolist() == [[0, 1], [1, 0]]


@given(square(5))
def test_invert_agrees_with_oracle(m):
    try:
        inv = linalg.invert(m)
    except SingularMatrix:
        assert oracles.det(m) == 0
        return
    assert oracles.matmul(m.tolist(), inv.tolist()) == np.eye(5, dtype=int).tolist()
    assert np.array_equal(linalg.invert(inv), m)


@given(arrays(np.uint8, (3, 4)), arrays(np.uint8, (4, 2)))
def test_mat_mul_matches_oracle(a, b):
    assert linalg.mat_mul(a, b).tolist() == oracles.matmul(a.tolist(), b.tolist())


@given(arrays(np.uint8, (3, 4)), arrays(np.uint8, (4, 7)))
def test_mat_vec_mul_broadcasts_over_buffers(m, bufs):
    out = linalg.mat_vec_mul(m, bufs)
    assert out.shape == (3, 7)
    for col in range(7):
        assert np.array_equal(out[:, col], linalg.mat_vec_mul(m, bufs[:, col]))


def test_hex_round_trip():
    m = np.arange(12, dtype=np.uint8).reshape(3, 4) * 21
    assert np.array_equal(linalg.parse_hex_matrix(linalg.format_hex_matrix(m)), m)
