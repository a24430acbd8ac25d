import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from tuhqkd.f2core import (BitMatrix, BitVector, DimensionError, SingularMatrixError,
                           collision_lower_bound, count_full_rank, enumerate_full_rank,
                           exact_collision_probability, invert, key_schedule, rank,
                           sample_full_rank, sample_invertible, sample_key_schedule)
from tuhqkd.selftest import full_rank_rows, kernel_hits


def bits(n):
    return st.lists(st.integers(0, 1), min_size=n, max_size=n)


def dense_rank(A):
    """Plain Gaussian elimination on a uint8 array, independent of the packed code."""
    A = A.copy() % 2
    r = 0
    for c in range(A.shape[1]):
        hit = [i for i in range(r, A.shape[0]) if A[i, c]]
        if not hit:
            continue
        A[[r, hit[0]]] = A[[hit[0], r]]
        for i in range(A.shape[0]):
            if i != r and A[i, c]:
                A[i] ^= A[r]
        r += 1
    return r


@pytest.mark.parametrize("n", [1, 7, 63, 64, 65, 129])
def test_vector_round_trips(n, rng):
    v = BitVector.random(n, rng)
    assert BitVector(v.to_string()) == v
    assert BitVector.from_hex(v.to_hex(), n) == v
    assert BitVector.from_int(v.to_int(), n) == v
    assert BitVector.from_support(n, v.support) == v
    assert (v + v).is_zero


def test_hex_is_big_endian_bit_zero_first():
    assert BitVector("1000").to_hex() == "8"
    assert BitVector("00000001").to_hex() == "01"
    assert BitVector("10001").to_hex() == "88"
    with pytest.raises(ValueError):
        BitVector.from_hex("89", 5)


def test_bad_inputs():
    with pytest.raises(ValueError):
        BitVector("0120")
    with pytest.raises(DimensionError):
        BitVector("01") + BitVector("011")
    with pytest.raises(SingularMatrixError):
        invert(BitMatrix(["11", "11"]))
    with pytest.raises(DimensionError):
        BitMatrix(["101"]) @ BitVector("10")


def test_text_format_reports_line():
    A = BitMatrix(["101", "011"])
    assert BitMatrix.from_text(A.to_text()) == A
    with pytest.raises(ValueError, match="line 2"):
        BitMatrix.from_text("101\n01\n")


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 80), st.integers(1, 80), st.integers(1, 80), st.integers(0, 2**32 - 1))
def test_product_matches_dense(a, b, c, seed):
    rng = np.random.default_rng(seed)
    A, B = BitMatrix.random(a, b, rng), BitMatrix.random(b, c, rng)
    assert np.array_equal((A @ B).to_dense(), (A.to_dense().astype(int) @ B.to_dense()) % 2)
    x = BitVector.random(b, rng)
    assert np.array_equal((A @ x).bits, (A.to_dense().astype(int) @ x.bits) % 2)
    assert A.T.T == A


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 70), st.integers(1, 70), st.integers(0, 2**32 - 1))
def test_rank_matches_dense(rows, cols, seed):
    rng = np.random.default_rng(seed)
    dense = (rng.random((rows, cols)) < rng.uniform(0.05, 0.6)).astype(np.uint8)
    assert rank(BitMatrix(dense)) == dense_rank(dense)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 140), st.integers(0, 2**32 - 1))
def test_inverse(n, seed):
    A = sample_invertible(n, seed)
    I = BitMatrix.identity(n)
    assert invert(A) @ A == I and A @ invert(A) == I


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 150), st.data())
def test_key_schedule_blocks(n, data):
    k = data.draw(st.integers(1, (n - 1) // 2))
    ks = sample_key_schedule(n, k, data.draw(st.integers(0, 2**32 - 1)))
    I = BitMatrix.identity(n)
    assert ks.L @ ks.M.T == I
    assert ks.L1 @ ks.M2.T == BitMatrix.zeros(k, k)
    assert ks.L1.rows == k and ks.M3.rows == n - 2 * k
    assert key_schedule(ks.L, k).M == ks.M


def test_sampling_is_deterministic():
    assert sample_invertible(50, 7) == sample_invertible(50, 7)
    assert sample_key_schedule(40, 9, 3).L == sample_key_schedule(40, 9, 3).L


def test_full_rank_counts_match_enumeration():
    for n in range(1, 4):
        for k in range(1, n + 1):
            mats = list(enumerate_full_rank(k, n))
            assert len(mats) == count_full_rank(k, n) == len(full_rank_rows(k, n))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_exhaustive_two_universality(n):
    for k in range(1, n + 1):
        mats = full_rank_rows(k, n)
        want = exact_collision_probability(k, n)
        assert want == collision_lower_bound(2**n, 2**k)
        for x in range(1, 2**n):
            assert Fraction(int(kernel_hits(mats, x).sum()), len(mats)) == want


def test_gl2_uniform(rng):
    draws = Counter(tuple(sample_invertible(2, rng).to_dense().ravel()) for _ in range(6000))
    assert len(draws) == 6
    assert chisquare(list(draws.values())).pvalue > 0.001


def test_structured_schedule_law_n3(rng):
    # every one of the 168 invertible 3x3 matrices, drawn through the block sampler
    draws = Counter(sample_key_schedule(3, 1, rng).L.to_dense().tobytes() for _ in range(168 * 60))
    assert len(draws) == 168
    assert chisquare(list(draws.values())).pvalue > 0.001


def test_full_rank_sampler_law(rng):
    draws = Counter(sample_full_rank(2, 3, rng).to_dense().tobytes() for _ in range(42 * 100))
    assert len(draws) == count_full_rank(2, 3) == 42
    assert chisquare(list(draws.values())).pvalue > 0.001
