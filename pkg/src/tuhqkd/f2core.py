"""Exact linear algebra over GF(2) on bit-packed vectors and matrices.

Bits are packed 64 to a ``uint64`` word, bit ``j`` of a row in word
``j // 64`` at position ``j % 64``.  Both containers are immutable; the
packed words are exposed read-only through ``.words``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from . import _kernels as K

__all__ = [
    "BitVector",
    "BitMatrix",
    "KeySchedule",
    "DimensionError",
    "SingularMatrixError",
    "as_rng",
    "multiply",
    "rank",
    "invert",
    "sample_invertible",
    "sample_full_rank",
    "key_schedule",
    "sample_key_schedule",
    "count_full_rank",
    "exact_collision_probability",
    "collision_lower_bound",
    "enumerate_full_rank",
    "enumerate_invertible",
    "read_matrix",
    "write_matrix",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class SingularMatrixError(ValueError):
    """Matrix is not invertible over GF(2)."""


def _nwords(nbits: int) -> int:
    return (nbits + 63) >> 6


def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack a (..., nbits) 0/1 array into (..., nwords) uint64."""
    bits = np.asarray(bits, dtype=np.uint8)
    nbits = bits.shape[-1]
    nw = _nwords(nbits)
    pad = nw * 64 - nbits
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), np.uint8)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.uint64).reshape(bits.shape[:-1] + (nw,))


def _unpack(words: np.ndarray, nbits: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype=np.uint64)
    as_bytes = words.view(np.uint8).reshape(words.shape[:-1] + (words.shape[-1] * 8,))
    return np.unpackbits(as_bytes, axis=-1, bitorder="little")[..., :nbits]


def _tail_mask(nbits: int) -> np.uint64:
    rem = nbits & 63
    return np.uint64((1 << rem) - 1) if rem else np.uint64(0xFFFFFFFFFFFFFFFF)


def _is_binary(arr: np.ndarray) -> bool:
    if arr.dtype == np.bool_:
        return True
    if arr.dtype.kind not in "iuf":
        return False
    return bool(((arr == 0) | (arr == 1)).all())


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.uint64)
    a.setflags(write=False)
    return a


def as_rng(rng=None) -> np.random.Generator:
    """Accept a Generator, an integer seed, or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def random_words(rng: np.random.Generator, rows: int, nbits: int) -> np.ndarray:
    """Uniform packed rows of ``nbits`` bits drawn from ``rng``."""
    nw = _nwords(nbits)
    out = rng.integers(0, 2**64, size=(rows, nw), dtype=np.uint64, endpoint=False)
    if nw:
        out[:, -1] &= _tail_mask(nbits)
    return out


class BitVector:
    """An immutable vector in GF(2)^n.

    String forms list bit 0 first: ``BitVector("110")`` has bits 0 and 1 set.
    """

    __slots__ = ("_n", "_words", "_hash")

    def __init__(self, bits: Union[str, Sequence[int], np.ndarray, "BitVector"]):
        if isinstance(bits, BitVector):
            self._n, self._words, self._hash = bits._n, bits._words, None
            return
        if isinstance(bits, str):
            if any(ch not in "01" for ch in bits):
                raise ValueError(f"bit string may only contain '0' and '1': {bits!r}")
            arr = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
        else:
            arr = np.asarray(bits)
            if arr.ndim != 1:
                raise ValueError("BitVector needs a one-dimensional bit sequence")
            if arr.size and not _is_binary(arr):
                raise ValueError("BitVector entries must be 0 or 1")
        if arr.size < 1:
            raise ValueError("BitVector length must be at least 1")
        self._n = int(arr.size)
        self._words = _frozen(_pack(arr.astype(np.uint8)))
        self._hash = None

    @classmethod
    def from_words(cls, words: np.ndarray, n: int) -> "BitVector":
        if n < 1:
            raise ValueError("BitVector length must be at least 1")
        words = np.array(words, dtype=np.uint64).reshape(-1)
        if words.size != _nwords(n):
            raise DimensionError(f"{words.size} words cannot hold exactly {n} bits")
        words[-1] &= _tail_mask(n)
        obj = cls.__new__(cls)
        obj._n, obj._words, obj._hash = n, _frozen(words), None
        return obj

    @classmethod
    def zeros(cls, n: int) -> "BitVector":
        return cls.from_words(np.zeros(_nwords(n), np.uint64), n)

    @classmethod
    def from_support(cls, n: int, support: Iterable[int]) -> "BitVector":
        bits = np.zeros(n, np.uint8)
        bits[list(support)] = 1
        return cls(bits)

    @classmethod
    def from_int(cls, value: int, n: int) -> "BitVector":
        """Bit j of the vector is bit j of ``value``."""
        if value < 0 or value >> n:
            raise ValueError(f"{value} does not fit in {n} bits")
        return cls([(value >> j) & 1 for j in range(n)])

    @classmethod
    def random(cls, n: int, rng=None) -> "BitVector":
        return cls.from_words(random_words(as_rng(rng), 1, n)[0], n)

    @classmethod
    def from_hex(cls, text: str, n: int) -> "BitVector":
        """Inverse of :meth:`to_hex`; padding bits must be zero."""
        ndig = (n + 3) // 4
        if len(text) != ndig or any(ch not in "0123456789abcdef" for ch in text):
            raise ValueError(f"expected {ndig} lowercase hex digits for {n} bits, got {text!r}")
        value = int(text, 16)
        pad = 4 * ndig - n
        if value & ((1 << pad) - 1):
            raise ValueError(f"nonzero padding bits in {text!r}")
        value >>= pad
        return cls([(value >> (n - 1 - j)) & 1 for j in range(n)])

    def __len__(self) -> int:
        return self._n

    @property
    def n(self) -> int:
        return self._n

    @property
    def words(self) -> np.ndarray:
        return self._words

    @property
    def bits(self) -> np.ndarray:
        return _unpack(self._words, self._n)

    @property
    def weight(self) -> int:
        return int(np.bitwise_count(self._words).sum())

    @property
    def support(self) -> tuple:
        return tuple(int(j) for j in np.flatnonzero(self.bits))

    def is_zero(self) -> bool:
        return not self._words.any()

    def to_int(self) -> int:
        return sum(1 << j for j in self.support)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def to_hex(self) -> str:
        """Lowercase hex, bit 0 as the most significant bit, zero padded at the end."""
        ndig = (self._n + 3) // 4
        value = 0
        for b in self.bits:
            value = (value << 1) | int(b)
        value <<= 4 * ndig - self._n
        return format(value, f"0{ndig}x")

    def __getitem__(self, j):
        if isinstance(j, slice):
            return BitVector(self.bits[j])
        if j < 0:
            j += self._n
        if not 0 <= j < self._n:
            raise IndexError(j)
        return int((int(self._words[j >> 6]) >> (j & 63)) & 1)

    def __iter__(self) -> Iterator[int]:
        return (int(b) for b in self.bits)

    def __add__(self, other: "BitVector") -> "BitVector":
        if not isinstance(other, BitVector):
            return NotImplemented
        if other._n != self._n:
            raise DimensionError(f"cannot add vectors of length {self._n} and {other._n}")
        return BitVector.from_words(self._words ^ other._words, self._n)

    __xor__ = __add__
    __sub__ = __add__

    def dot(self, other: "BitVector") -> int:
        if other._n != self._n:
            raise DimensionError(f"cannot dot vectors of length {self._n} and {other._n}")
        return int(np.bitwise_count(self._words & other._words).sum() & 1)

    def concat(self, other: "BitVector") -> "BitVector":
        return BitVector(np.concatenate([self.bits, other.bits]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self._n == other._n and np.array_equal(self._words, other._words)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._n, self._words.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"BitVector('{self.to_string()}')"


class BitMatrix:
    """An immutable ``rows x cols`` matrix over GF(2), stored as packed rows."""

    __slots__ = ("_rows", "_cols", "_words", "_hash")

    def __init__(self, entries):
        if isinstance(entries, BitMatrix):
            self._rows, self._cols, self._words, self._hash = (
                entries._rows, entries._cols, entries._words, None)
            return
        if isinstance(entries, str):
            entries = [line for line in entries.split() if line]
        if isinstance(entries, (list, tuple)) and entries and isinstance(entries[0], (str, BitVector)):
            entries = [BitVector(e).bits for e in entries]
        arr = np.asarray(entries)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"BitMatrix needs a non-empty 2-D array, got shape {arr.shape}")
        if not _is_binary(arr):
            raise ValueError("BitMatrix entries must be 0 or 1")
        self._rows, self._cols = int(arr.shape[0]), int(arr.shape[1])
        self._words = _frozen(_pack(arr.astype(np.uint8)))
        self._hash = None

    @classmethod
    def from_words(cls, words: np.ndarray, cols: int) -> "BitMatrix":
        words = np.array(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != _nwords(cols) or words.shape[0] < 1:
            raise DimensionError(f"packed shape {words.shape} does not match {cols} columns")
        words[:, -1] &= _tail_mask(cols)
        obj = cls.__new__(cls)
        obj._rows, obj._cols, obj._words, obj._hash = words.shape[0], cols, _frozen(words), None
        return obj

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls(np.eye(n, dtype=np.uint8))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls.from_words(np.zeros((rows, _nwords(cols)), np.uint64), cols)

    @classmethod
    def random(cls, rows: int, cols: int, rng=None) -> "BitMatrix":
        return cls.from_words(random_words(as_rng(rng), rows, cols), cols)

    @classmethod
    def from_rows(cls, rows: Sequence[BitVector]) -> "BitMatrix":
        if not rows:
            raise ValueError("need at least one row")
        cols = len(rows[0])
        if any(len(r) != cols for r in rows):
            raise DimensionError("rows have different lengths")
        return cls.from_words(np.stack([r.words for r in rows]), cols)

    @property
    def shape(self) -> tuple:
        return (self._rows, self._cols)

    @property
    def rows(self) -> int:
        return self._rows

    @property
    def cols(self) -> int:
        return self._cols

    @property
    def words(self) -> np.ndarray:
        return self._words

    def to_dense(self) -> np.ndarray:
        return _unpack(self._words, self._cols)

    def row(self, i: int) -> BitVector:
        return BitVector.from_words(self._words[i], self._cols)

    def row_block(self, start: int, stop: int) -> "BitMatrix":
        if not 0 <= start < stop <= self._rows:
            raise DimensionError(f"row block [{start}, {stop}) out of range for {self._rows} rows")
        return BitMatrix.from_words(self._words[start:stop], self._cols)

    def vstack(self, other: "BitMatrix") -> "BitMatrix":
        if other._cols != self._cols:
            raise DimensionError("column counts differ")
        return BitMatrix.from_words(np.vstack([self._words, other._words]), self._cols)

    def hstack(self, other: "BitMatrix") -> "BitMatrix":
        if other._rows != self._rows:
            raise DimensionError("row counts differ")
        return BitMatrix(np.hstack([self.to_dense(), other.to_dense()]))

    @property
    def T(self) -> "BitMatrix":
        return BitMatrix.from_words(K.transpose(self._words, self._rows, self._cols), self._rows)

    def __getitem__(self, ij) -> int:
        i, j = ij
        return int((int(self._words[i, j >> 6]) >> (j & 63)) & 1)

    def __matmul__(self, other):
        return multiply(self, other)

    def __add__(self, other: "BitMatrix") -> "BitMatrix":
        if not isinstance(other, BitMatrix):
            return NotImplemented
        if other.shape != self.shape:
            raise DimensionError(f"cannot add {self.shape} and {other.shape}")
        return BitMatrix.from_words(self._words ^ other._words, self._cols)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._words, other._words)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._rows, self._cols, self._words.tobytes()))
        return self._hash

    def to_text(self) -> str:
        """One row per line, characters '0'/'1', no separators."""
        return "".join("".join("1" if b else "0" for b in row) + "\n" for row in self.to_dense())

    @classmethod
    def from_text(cls, text: str) -> "BitMatrix":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines:
            raise ValueError("empty matrix text")
        width = len(lines[0])
        for lineno, ln in enumerate(lines, 1):
            if len(ln) != width:
                raise ValueError(f"line {lineno}: expected {width} columns, got {len(ln)}")
            if any(ch not in "01" for ch in ln):
                raise ValueError(f"line {lineno}: only '0' and '1' are allowed")
        return cls(lines)

    def __repr__(self) -> str:
        return f"BitMatrix({self._rows}x{self._cols})"


def read_matrix(path) -> BitMatrix:
    with open(path) as fh:
        return BitMatrix.from_text(fh.read())


def write_matrix(path, A: BitMatrix) -> None:
    with open(path, "w") as fh:
        fh.write(A.to_text())


def multiply(A: BitMatrix, B):
    """GF(2) product ``A @ B`` for a matrix or a vector ``B``."""
    if isinstance(B, BitVector):
        if A.cols != len(B):
            raise DimensionError(f"cannot multiply {A.shape} matrix by length-{len(B)} vector")
        return BitVector.from_words(K.matvec(A.words, B.words), A.rows)
    if isinstance(B, BitMatrix):
        if A.cols != B.rows:
            raise DimensionError(f"cannot multiply {A.shape} by {B.shape}")
        return BitMatrix.from_words(K.matmul(A.words, B.words, A.cols), B.cols)
    raise TypeError(f"cannot multiply BitMatrix by {type(B).__name__}")


def _rref(A: BitMatrix, aug: np.ndarray | None = None):
    work = np.array(A.words)
    extra = np.zeros((A.rows, 0), np.uint64) if aug is None else np.array(aug)
    r, piv = K.gauss_jordan_inplace(work, extra, A.cols)
    return r, piv, work, extra


def rank(A: BitMatrix) -> int:
    return int(_rref(A)[0])


def invert(A: BitMatrix) -> BitMatrix:
    n = A.rows
    if A.cols != n:
        raise DimensionError(f"only square matrices can be inverted, got {A.shape}")
    eye = _pack(np.eye(n, dtype=np.uint8))
    r, _, _, inv = _rref(A, eye)
    if r != n:
        raise SingularMatrixError(f"matrix is not invertible (rank {r} < {n})")
    return BitMatrix.from_words(inv, n)


def _draw_full_rank(rng: np.random.Generator, m: int, ncols: int):
    """Row-by-row rejection: each kept row is uniform outside the span of earlier rows."""
    # generous batches keep the draw count fixed except with negligible probability
    batch = m + 64
    cand = random_words(rng, batch, ncols)
    while True:
        rows, rref, piv, used = K.sample_full_rank_rows(cand, m, ncols)
        if used >= 0:
            return rows, rref, piv
        cand = np.vstack([cand, random_words(rng, batch, ncols)])


def sample_full_rank(k: int, n: int, rng=None) -> BitMatrix:
    """Uniformly random rank-k matrix in GF(2)^{k x n}."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rows, _, _ = _draw_full_rank(as_rng(rng), k, n)
    return BitMatrix.from_words(rows, n)


def sample_invertible(n: int, rng=None) -> BitMatrix:
    """Uniformly random invertible ``n x n`` matrix; deterministic given the seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return sample_full_rank(n, n, rng)


@dataclass(frozen=True)
class KeySchedule:
    """Row blocks of L and of M = (L^-1)^T: first k, second k, last n - 2k rows."""

    n: int
    k: int
    L: BitMatrix
    M: BitMatrix

    @property
    def L1(self) -> BitMatrix:
        return self.L.row_block(0, self.k)

    @property
    def L2(self) -> BitMatrix:
        return self.L.row_block(self.k, 2 * self.k)

    @property
    def L3(self) -> BitMatrix:
        return self.L.row_block(2 * self.k, self.n)

    @property
    def M1(self) -> BitMatrix:
        return self.M.row_block(0, self.k)

    @property
    def M2(self) -> BitMatrix:
        return self.M.row_block(self.k, 2 * self.k)

    @property
    def M3(self) -> BitMatrix:
        return self.M.row_block(2 * self.k, self.n)


def key_schedule(L: BitMatrix, k: int) -> KeySchedule:
    n = L.rows
    if L.cols != n:
        raise DimensionError(f"L must be square, got {L.shape}")
    if k < 1 or 2 * k >= n:
        raise ValueError(f"need 1 <= k and 2k < n, got k={k}, n={n}")
    M = invert(L).T
    return KeySchedule(n=n, k=k, L=L, M=M)


def count_full_rank(k: int, n: int) -> int:
    """Number of rank-k matrices in GF(2)^{k x n}: prod_{i=1..k} (2^n - 2^(i-1))."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    out = 1
    for i in range(1, k + 1):
        out *= (1 << n) - (1 << (i - 1))
    return out


def exact_collision_probability(k: int, n: int) -> Fraction:
    """Pr_L(Lx = 0) for fixed x != 0 and L uniform over rank-k k x n matrices."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return Fraction((1 << (n - k)) - 1, (1 << n) - 1)


def collision_lower_bound(size_x: int, size_y: int) -> Fraction:
    """Smallest collision probability any family X -> Y can guarantee: (|X|/|Y| - 1)/(|X| - 1)."""
    return (Fraction(size_x, size_y) - 1) / (size_x - 1)


def enumerate_full_rank(k: int, n: int) -> Iterator[BitMatrix]:
    """Every rank-k matrix in GF(2)^{k x n}, in lex order of row integers. Desk scale only."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    vectors = [BitVector.from_int(v, n) for v in range(1, 1 << n)]
    for combo in itertools.product(vectors, repeat=k):
        A = BitMatrix.from_rows(list(combo))
        if rank(A) == k:
            yield A


def enumerate_invertible(n: int) -> Iterator[BitMatrix]:
    return enumerate_full_rank(n, n)


def _schedule_blocks(rng: np.random.Generator, n: int, k: int, form_l1: bool = True):
    """Draw (L1, [M2; M3]) with the same joint law as the blocks of a uniform invertible L.

    M = (L^-1)^T is itself uniform, so its last n - k rows are a uniform
    full-rank matrix.  Given those, L1 is a uniform ordered basis of their
    annihilator.  Returns packed L1 and packed [M2; M3].  With
    ``form_l1=False`` the annihilator basis is returned in place of L1 (same
    row space, same random draws).
    """
    tail, rref, piv = _draw_full_rank(rng, n - k, n)
    basis = K.annihilator_basis(rref, piv, n)
    G, _, _ = _draw_full_rank(rng, k, k)
    L1 = K.matmul(G, basis, k) if form_l1 else basis
    return L1, tail


def _complete_schedule(rng: np.random.Generator, n: int, k: int, L1, tail) -> KeySchedule:
    """Draw the remaining rows of L given L1 and [M2; M3].

    The rows below L1 must satisfy rest @ tail^T = I; they are a particular
    solution plus a uniform combination of L1's rows.
    """
    m = n - k
    rref = np.array(tail)
    comb = _pack(np.eye(m, dtype=np.uint8))
    _, piv = K.gauss_jordan_inplace(rref, comb, n)
    # rref = comb @ tail and rref has identity columns at piv, so comb^T Q works with Q rows e_piv
    Q = np.zeros((m, _nwords(n)), np.uint64)
    for i, p in enumerate(piv):
        Q[i, p >> 6] = np.uint64(1) << np.uint64(p & 63)
    P = K.matmul(K.transpose(comb, m, m), Q, m)
    X = random_words(rng, m, k)
    rest = P ^ K.matmul(X, L1, k)
    L = BitMatrix.from_words(np.vstack([L1, rest]), n)
    ks = key_schedule(L, k)
    if not np.array_equal(ks.M.words[k:], tail):
        raise AssertionError("key schedule completion is inconsistent")
    return ks


def sample_key_schedule(n: int, k: int, rng=None) -> KeySchedule:
    """Key schedule of a uniformly random invertible L.

    Same distribution as ``key_schedule(sample_invertible(n, rng), k)`` but
    built block by block, which is cheaper for large n.
    """
    if k < 1 or 2 * k >= n:
        raise ValueError(f"need 1 <= k and 2k < n, got k={k}, n={n}")
    rng = as_rng(rng)
    L1, tail = _schedule_blocks(rng, n, k)
    return _complete_schedule(rng, n, k, L1, tail)
