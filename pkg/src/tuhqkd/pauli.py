"""Dense statevector oracle for commuting Pauli tuples and Bell states.

Only meant for a handful of qubits.  Qubit 0 is the most significant bit of
a basis index, and a bipartite basis state |a, b> on n + n qubits has index
``a * 2**n + b``.

A generator is ``(-1)**sign * X**u * Z**v`` (X applied after Z), with
``u . v`` even so that it is real and symmetric.  Products follow
``(s1, u1, v1)(s2, u2, v2) = (s1 + s2 + v1.u2, u1 + u2, v1 + v2)``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .f2core import (BitMatrix, BitVector, DimensionError, KeySchedule, as_rng, invert, rank,
                     sample_invertible)
from .hashball import BallSpec, ball_iter

__all__ = [
    "ResourceError",
    "InvalidTupleError",
    "PauliTuple",
    "StateVec",
    "BellIndex",
    "OracleOutcome",
    "bell_state",
    "projector",
    "measure_tuple",
    "check_bell_action",
    "bell_offset",
    "oracle_protocol_run",
    "oracle_tuples",
    "random_commuting_tuple",
    "combine",
    "bell_diagonal_state",
    "ball_projector",
    "shift_residual",
    "coarse_graining_residual",
    "dephasing_residual",
    "transpose_trick_residuals",
    "bell_action_residual",
]

MAX_BELL_N = 6
MAX_ORACLE_N = 4
TOL = 1e-9


class ResourceError(RuntimeError):
    """Dense simulation requested beyond the supported size."""


class InvalidTupleError(ValueError):
    """Generators are dependent, do not commute, or are not real."""


def _mask(v: BitVector) -> int:
    # qubit 0 is the most significant bit
    return int(v.to_string(), 2)


def _popcount(a) -> np.ndarray:
    return np.bitwise_count(np.asarray(a, dtype=np.uint64)).astype(np.int64)


class PauliTuple:
    """An ordered tuple of commuting, independent, real Pauli operators on n qubits."""

    __slots__ = ("n", "m", "xpart", "zpart", "signs", "_masks")

    def __init__(self, xpart: BitMatrix, zpart: BitMatrix, signs: Optional[Sequence[int]] = None):
        if xpart.shape != zpart.shape:
            raise DimensionError(f"x part {xpart.shape} and z part {zpart.shape} differ")
        m, n = xpart.shape
        signs = tuple(int(s) & 1 for s in (signs if signs is not None else [0] * m))
        if len(signs) != m:
            raise DimensionError(f"{len(signs)} signs for {m} generators")
        if rank(xpart.hstack(zpart)) != m:
            raise InvalidTupleError("generators are not independent")
        sympl = (xpart @ zpart.T) + (zpart @ xpart.T)
        if sympl.to_dense().any():
            raise InvalidTupleError("generators do not commute")
        for i in range(m):
            if xpart.row(i).dot(zpart.row(i)):
                raise InvalidTupleError(f"generator {i} is not real (odd X/Z overlap)")
        self.n, self.m = n, m
        self.xpart, self.zpart, self.signs = xpart, zpart, signs
        self._masks = [(signs[i], _mask(xpart.row(i)), _mask(zpart.row(i))) for i in range(m)]

    @classmethod
    def z_type(cls, rows: BitMatrix) -> "PauliTuple":
        """Generators Z**row for each row."""
        return cls(BitMatrix.zeros(*rows.shape), rows)

    @classmethod
    def x_type(cls, rows: BitMatrix) -> "PauliTuple":
        """Generators X**row for each row."""
        return cls(rows, BitMatrix.zeros(*rows.shape))

    @property
    def masks(self):
        return list(self._masks)

    def embed(self, total: int, offset: int) -> "PauliTuple":
        """The same operators acting on qubits ``offset .. offset+n-1`` of ``total``."""
        if offset < 0 or offset + self.n > total:
            raise DimensionError("embedding does not fit")

        def pad(A: BitMatrix) -> BitMatrix:
            dense = np.zeros((self.m, total), np.uint8)
            dense[:, offset:offset + self.n] = A.to_dense()
            return BitMatrix(dense)

        return PauliTuple(pad(self.xpart), pad(self.zpart), self.signs)

    def offsets(self, alpha: BitVector, beta: BitVector) -> BitVector:
        """Symplectic products of each generator with X**alpha Z**beta: xpart.beta + zpart.alpha."""
        return (self.xpart @ beta) + (self.zpart @ alpha)

    def __repr__(self) -> str:
        return f"PauliTuple(n={self.n}, m={self.m})"


def _apply(mask, psi: np.ndarray, idx: np.ndarray) -> np.ndarray:
    s, u, v = mask
    src = idx ^ u
    phase = 1 - 2 * ((s + _popcount(src & v)) & 1)
    return phase * psi[src]


def _generator_dense(mask, n: int) -> np.ndarray:
    s, u, v = mask
    idx = np.arange(1 << n)
    G = np.zeros((1 << n, 1 << n))
    G[idx ^ u, idx] = 1 - 2 * ((s + _popcount(idx & v)) & 1)
    return G


@dataclass(frozen=True)
class StateVec:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (1 << self.n_qubits,):
            raise DimensionError(f"need {1 << self.n_qubits} amplitudes, got {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state is not normalized (squared norm {norm})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVec":
        a = np.zeros(1 << n_qubits, complex)
        a[index] = 1.0
        return cls(n_qubits, a)


@dataclass(frozen=True)
class BellIndex:
    alpha: BitVector
    beta: BitVector

    def __post_init__(self):
        if len(self.alpha) != len(self.beta):
            raise DimensionError("alpha and beta lengths differ")

    @property
    def n(self) -> int:
        return len(self.alpha)


def _bell_amplitudes(n: int, alpha: int, beta: int) -> np.ndarray:
    z = np.arange(1 << n)
    amps = np.zeros(1 << (2 * n))
    amps[z * (1 << n) + (z ^ alpha)] = (1 - 2 * (_popcount(z & beta) & 1)) * 2.0 ** (-n / 2)
    return amps


def bell_state(idx: BellIndex) -> StateVec:
    """(I tensor X**alpha Z**beta) applied to the maximally entangled state on n + n qubits."""
    if idx.n > MAX_BELL_N:
        raise ResourceError(f"Bell states are limited to n <= {MAX_BELL_N}, got {idx.n}")
    return StateVec(2 * idx.n, _bell_amplitudes(idx.n, _mask(idx.alpha), _mask(idx.beta)))


def projector(t: PauliTuple, x: BitVector) -> np.ndarray:
    """Dense 2**-m prod_j (I + (-1)**x_j g_j)."""
    if t.n > MAX_BELL_N:
        raise ResourceError(f"dense projectors are limited to n <= {MAX_BELL_N}")
    if len(x) != t.m:
        raise DimensionError(f"outcome has length {len(x)}, tuple has {t.m} generators")
    dim = 1 << t.n
    P = np.eye(dim)
    for j, mask in enumerate(t.masks):
        sgn = -1.0 if x[j] else 1.0
        P = P @ (np.eye(dim) + sgn * _generator_dense(mask, t.n)) / 2
    return P


def _project(t: PauliTuple, x: Sequence[int], psi: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = psi
    for xj, mask in zip(x, t.masks):
        g = _apply(mask, out, idx)
        out = (out - g) / 2 if xj else (out + g) / 2
    return out


def outcome_distribution(state: StateVec, t: PauliTuple):
    """(outcome tuple, probability, projected vector) for every outcome in lexicographic order."""
    if t.n != state.n_qubits:
        raise DimensionError(f"tuple acts on {t.n} qubits, state has {state.n_qubits}")
    idx = np.arange(1 << t.n)
    rows = []
    for x in itertools.product((0, 1), repeat=t.m):
        v = _project(t, x, state.amplitudes, idx)
        rows.append((x, float(np.vdot(v, v).real), v))
    return rows


def measure_tuple(state: StateVec, t: PauliTuple, rng=None):
    """Projective measurement of ``t``; returns (outcome, post-measurement state, probability).

    Branches are ordered lexicographically and picked by inverting the
    cumulative distribution with one uniform draw.
    """
    rng = as_rng(rng)
    rows = outcome_distribution(state, t)
    u = rng.random()
    acc = 0.0
    chosen = None
    for x, p, v in rows:
        if p <= 0.0:
            continue
        chosen = (x, p, v)
        acc += p
        if u < acc:
            break
    x, p, v = chosen
    return BitVector(list(x)), StateVec(state.n_qubits, v / np.sqrt(p)), p


def bell_offset(t: PauliTuple, idx: BellIndex) -> BitVector:
    return t.offsets(idx.alpha, idx.beta)


def bell_action_residual(t: PauliTuple, idx: BellIndex) -> float:
    """Largest norm of (P(x) tensor P(y)) |psi_ab> over pairs violating x = y + offset."""
    n = t.n
    if n > 5:
        raise ResourceError("Bell action checks are limited to n <= 5")
    psi = bell_state(idx).amplitudes.real.reshape(1 << n, 1 << n)
    off = bell_offset(t, idx)
    worst = 0.0
    outcomes = [BitVector(list(x)) for x in itertools.product((0, 1), repeat=t.m)]
    projs = {x: projector(t, x) for x in outcomes}
    for x in outcomes:
        for y in outcomes:
            # (P tensor Q) acting on a state stored as a matrix psi[a, b] is P psi Q^T
            val = np.linalg.norm(projs[x] @ psi @ projs[y].T)
            if x != y + off:
                worst = max(worst, val)
    return worst


def check_bell_action(t: PauliTuple, idx: BellIndex) -> bool:
    return bell_action_residual(t, idx) <= TOL


def random_commuting_tuple(n: int, m: int, rng=None, signed: bool = True) -> PauliTuple:
    """A random valid tuple.

    Z-type rows are taken from an invertible L and X-type rows from
    (L^-1)^T on disjoint row indices, so all of them commute; a random
    invertible recombination then mixes X and Z parts.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = as_rng(rng)
    L = sample_invertible(n, rng)
    Ld, Md = L.to_dense(), invert(L).T.to_dense()
    picks = rng.permutation(n)[:m]
    nz = int(rng.integers(0, m + 1))
    xrows = np.zeros((m, n), np.uint8)
    zrows = np.zeros((m, n), np.uint8)
    for i, j in enumerate(picks):
        if i < nz:
            zrows[i] = Ld[j]
        else:
            xrows[i] = Md[j]
    out = combine(PauliTuple(BitMatrix(xrows), BitMatrix(zrows)), sample_invertible(m, rng))
    if signed:
        flips = rng.integers(0, 2, size=m)
        out = PauliTuple(out.xpart, out.zpart, [(a + int(b)) & 1 for a, b in zip(out.signs, flips)])
    return out


def combine(t: PauliTuple, L: BitMatrix) -> PauliTuple:
    """The tuple whose i-th generator is prod_j g_j**L[i, j], taken in index order."""
    if L.cols != t.m:
        raise DimensionError(f"combination has {L.cols} columns, tuple has {t.m} generators")
    X, Z = t.xpart.to_dense(), t.zpart.to_dense()
    xs, zs, ss = [], [], []
    for i in range(L.rows):
        s, u, v = 0, np.zeros(t.n, np.uint8), np.zeros(t.n, np.uint8)
        for j in range(t.m):
            if L[i, j]:
                s = (s + t.signs[j] + int(v @ X[j])) & 1
                u ^= X[j]
                v ^= Z[j]
        xs.append(u)
        zs.append(v)
        ss.append(s)
    return PauliTuple(BitMatrix(np.array(xs)), BitMatrix(np.array(zs)), ss)


def bell_diagonal_state(dist: Dict[Tuple[BitVector, BitVector], float]) -> np.ndarray:
    """Density matrix sum p(a, b) |psi_ab><psi_ab|."""
    rho = None
    for (a, b), p in dist.items():
        v = bell_state(BellIndex(a, b)).amplitudes.real
        term = p * np.outer(v, v)
        rho = term if rho is None else rho + term
    return rho


def ball_projector(n: int, r: int) -> np.ndarray:
    """Projector onto Bell states whose bit and phase patterns both have weight <= r."""
    ball = list(ball_iter(BallSpec(n, r))) if 2 * r <= n else [
        BitVector.from_int(v, n) for v in range(1 << n) if bin(v).count("1") <= r]
    Pi = np.zeros((1 << (2 * n), 1 << (2 * n)))
    for a in ball:
        for b in ball:
            v = bell_state(BellIndex(a, b)).amplitudes.real
            Pi += np.outer(v, v)
    return Pi


def _opnorm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A, 2)) if A.size else 0.0


def shift_residual(t: PauliTuple, hx: BitVector, hz: BitVector) -> float:
    """max_x || P(g, x) h - h P(g, x + <g, h>) || for the Pauli h = X**hx Z**hz."""
    if hx.dot(hz):
        raise InvalidTupleError("h must be real (even X/Z overlap)")
    H = _generator_dense((0, _mask(hx), _mask(hz)), t.n)
    shift = t.offsets(hx, hz)
    worst = 0.0
    for x in itertools.product((0, 1), repeat=t.m):
        xv = BitVector(list(x))
        worst = max(worst, _opnorm(projector(t, xv) @ H - H @ projector(t, xv + shift)))
    return worst


def coarse_graining_residual(t: PauliTuple, L: BitMatrix) -> float:
    """max_y || P(L g, y) - sum_{x : L x = y} P(g, x) || for a full-row-rank L."""
    combined = combine(t, L)
    sums: Dict[BitVector, np.ndarray] = {}
    for x in itertools.product((0, 1), repeat=t.m):
        xv = BitVector(list(x))
        y = L @ xv
        sums[y] = sums.get(y, 0) + projector(t, xv)
    worst = 0.0
    for y, S in sums.items():
        worst = max(worst, _opnorm(projector(combined, y) - S))
    return worst


def dephasing_residual(n: int, alpha: BitVector) -> float:
    """|| sum_b |psi_ab><psi_ab| - sum_z |z, z+a><z, z+a| ||."""
    dim = 1 << (2 * n)
    lhs = np.zeros((dim, dim))
    for b in range(1 << n):
        v = bell_state(BellIndex(alpha, BitVector.from_int(b, n))).amplitudes.real
        lhs += np.outer(v, v)
    rhs = np.zeros((dim, dim))
    a = _mask(alpha)
    for z in range(1 << n):
        i = z * (1 << n) + (z ^ a)
        rhs[i, i] = 1.0
    return _opnorm(lhs - rhs)


def transpose_trick_residuals(Mat: np.ndarray) -> Tuple[float, float]:
    """Residuals of <psi|(I x M)|psi> = 2**-n Tr M and (M x I)|psi> = (I x M^T)|psi>."""
    dim = Mat.shape[0]
    n = dim.bit_length() - 1
    psi = _bell_amplitudes(n, 0, 0)
    I = np.eye(dim)
    r1 = abs(psi @ np.kron(I, Mat) @ psi - np.trace(Mat) / dim)
    r2 = float(np.linalg.norm(np.kron(Mat, I) @ psi - np.kron(I, Mat.T) @ psi))
    return float(r1), r2


@dataclass(frozen=True)
class OracleOutcome:
    u_A: BitVector
    u_B: BitVector
    v_A: BitVector
    v_B: BitVector
    w_A: BitVector
    w_B: BitVector


@functools.lru_cache(maxsize=64)
def oracle_tuples(ks: KeySchedule):
    """The six measurements of a run, in order: L1 Z-type on A, on B, M2 X-type on A, on B, M3 likewise."""
    n = ks.n
    base = [PauliTuple.z_type(ks.L1), PauliTuple.x_type(ks.M2), PauliTuple.x_type(ks.M3)]
    return [t.embed(2 * n, offset) for t in base for offset in (0, n)]


def oracle_protocol_run(ks: KeySchedule, idx: BellIndex, rng=None, tuples=None) -> OracleOutcome:
    """Measure L1 Z-type, then M2 X-type, then M3 X-type tuples on A and B of a Bell state.

    ``tuples`` may carry a cached :func:`oracle_tuples` result for ``ks``.
    """
    n = ks.n
    if n > MAX_ORACLE_N:
        raise ResourceError(f"the statevector oracle is limited to n <= {MAX_ORACLE_N}, got {n}")
    if idx.n != n:
        raise DimensionError("Bell index and key schedule sizes differ")
    rng = as_rng(rng)
    if tuples is None:
        tuples = oracle_tuples(ks)  # cached per schedule
    state = bell_state(idx)
    results = []
    for t in tuples:
        out, state, _ = measure_tuple(state, t, rng)
        results.append(out)
    return OracleOutcome(*results)
