"""The hashing-based key agreement protocol, simulated against Pauli-error channels.

Two backends produce runs:

* ``fast`` draws the announced strings straight from their joint law: the
  Alice-side outcomes are independent uniform strings and every Bob-side
  outcome differs from Alice's by a fixed linear image of the error pattern.
* ``statevector`` measures an actual Bell state with the dense oracle in
  :mod:`tuhqkd.pauli` (n <= 4 only).

Random draws within a run always happen in the same order: error pattern,
key schedule, then announcements (or oracle measurements), then the part
of L that only the full record needs.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom

from . import __version__
from . import _kernels as K
from .f2core import (BitMatrix, BitVector, DimensionError, KeySchedule, _complete_schedule,
                     _schedule_blocks, as_rng, random_words, sample_key_schedule)
from .hashball import TABLE_CAP, BallSpec, BallTooLarge, DecodeResult, binary_entropy, g_ball
from .pauli import BellIndex, ResourceError, oracle_protocol_run

__all__ = [
    "ProtocolParams",
    "ErrorPattern",
    "EveModel",
    "RunRecord",
    "Transcript",
    "TranscriptError",
    "BatchSummary",
    "splitmix64",
    "child_seed",
    "run",
    "run_batch",
    "accept_probability",
    "fast_outcome_law",
    "transcript_serialize",
    "transcript_parse",
]

SUMMARY_SCHEMA = "tuhqkd.batch-summary"
SUMMARY_VERSION = 1
_MASK64 = (1 << 64) - 1
MAX_WORK = float(2**32)


@dataclass(frozen=True)
class ProtocolParams:
    """Block size n, syndrome size k and tolerated flip count r."""

    n: int
    k: int
    r: int

    def __post_init__(self):
        if self.k < 1 or 2 * self.k >= self.n:
            raise ValueError(f"need 1 <= k and 2k < n, got n={self.n}, k={self.k}")
        if self.r < 0 or 2 * self.r > self.n:
            raise ValueError(f"need 0 <= r and 2r <= n, got n={self.n}, r={self.r}")

    @property
    def key_length(self) -> int:
        return self.n - 2 * self.k

    @property
    def entropy_term(self) -> float:
        return self.n * binary_entropy(self.r / self.n)

    @property
    def secure(self) -> bool:
        """Whether 2 n h(r/n) < 2k, the regime where the security bound is meaningful."""
        return 2 * self.entropy_term < 2 * self.k

    @property
    def bound_2uh(self) -> float:
        """Bound on the chance that either decoder picks a wrong in-ball pattern."""
        return 2.0 * 2.0 ** (-self.k + self.entropy_term)

    @property
    def acceptance_slack(self) -> float:
        """How far the real accept probability may sit from the ideal in-ball mass."""
        return 2.0 ** (-self.k / 2 + self.entropy_term / 2 + 1.5)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "r": self.r}


@dataclass(frozen=True)
class ErrorPattern:
    """Bit flips ``alpha`` and phase flips ``beta``."""

    alpha: BitVector
    beta: BitVector

    def __post_init__(self):
        if len(self.alpha) != len(self.beta):
            raise DimensionError("alpha and beta lengths differ")

    @property
    def n(self) -> int:
        return len(self.alpha)

    @classmethod
    def zero(cls, n: int) -> "ErrorPattern":
        return cls(BitVector.zeros(n), BitVector.zeros(n))

    def in_ball(self, r: int) -> bool:
        return self.alpha.weight <= r and self.beta.weight <= r


class EveModel:
    """Distribution over error patterns: ``none``, ``fixed``, ``iid`` or ``custom``."""

    KINDS = ("none", "fixed", "iid", "custom")

    def __init__(self, kind: str, pattern: Optional[ErrorPattern] = None, p_flip: float = 0.0,
                 distribution: Optional[Sequence[Tuple[ErrorPattern, float]]] = None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown adversary kind {kind!r}")
        self.kind = kind
        self.pattern = pattern
        self.p_flip = float(p_flip)
        self.distribution = list(distribution) if distribution is not None else None
        if kind == "fixed" and pattern is None:
            raise ValueError("a fixed adversary needs a pattern")
        if kind == "iid" and not 0.0 <= self.p_flip <= 1.0:
            raise ValueError(f"flip probability must lie in [0, 1], got {p_flip}")
        if kind == "custom":
            if not self.distribution:
                raise ValueError("a custom adversary needs a non-empty distribution")
            probs = np.array([p for _, p in self.distribution], dtype=float)
            if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError(f"probabilities must be non-negative and sum to 1, got {probs.sum()!r}")
            lengths = {pat.n for pat, _ in self.distribution}
            if len(lengths) != 1:
                raise ValueError("patterns in a custom distribution have different lengths")
            self._cum = np.cumsum(probs)

    @classmethod
    def none(cls) -> "EveModel":
        return cls("none")

    @classmethod
    def fixed(cls, pattern: ErrorPattern) -> "EveModel":
        return cls("fixed", pattern=pattern)

    @classmethod
    def iid(cls, p_flip: float) -> "EveModel":
        return cls("iid", p_flip=p_flip)

    @classmethod
    def custom(cls, distribution: Sequence[Tuple[ErrorPattern, float]]) -> "EveModel":
        return cls("custom", distribution=distribution)

    @classmethod
    def parse(cls, text: str) -> "EveModel":
        """``none``, ``iid:p=0.01`` or ``fixed:alpha=100,beta=000``."""
        kind, _, rest = text.partition(":")
        opts = {}
        for item in filter(None, rest.split(",")):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValueError(f"expected key=value in adversary spec, got {item!r}")
            opts[key.strip()] = val.strip()
        if kind == "none" and not opts:
            return cls.none()
        if kind == "iid" and set(opts) == {"p"}:
            return cls.iid(float(opts["p"]))
        if kind == "fixed" and set(opts) == {"alpha", "beta"}:
            return cls.fixed(ErrorPattern(BitVector(opts["alpha"]), BitVector(opts["beta"])))
        raise ValueError(f"cannot parse adversary spec {text!r}")

    def check(self, n: int) -> None:
        if self.kind == "fixed" and self.pattern.n != n:
            raise DimensionError(f"fixed pattern has length {self.pattern.n}, protocol uses n={n}")
        if self.kind == "custom" and self.distribution[0][0].n != n:
            raise DimensionError(f"custom patterns have length {self.distribution[0][0].n}, protocol uses n={n}")

    def _draw_words(self, n: int, rng: np.random.Generator):
        if self.kind == "none":
            z = np.zeros((n + 63) >> 6, np.uint64)
            return z, z.copy()
        if self.kind == "fixed":
            return np.array(self.pattern.alpha.words), np.array(self.pattern.beta.words)
        if self.kind == "iid":
            flips = rng.random(2 * n) < self.p_flip
            nw = (n + 63) >> 6
            padded = np.zeros((2, nw * 64), np.uint8)
            padded[:, :n] = flips.reshape(2, n)
            words = np.packbits(padded, axis=1, bitorder="little").view(np.uint64)
            return words[0].copy(), words[1].copy()
        i = int(np.searchsorted(self._cum, rng.random(), side="right"))
        pat = self.distribution[min(i, len(self.distribution) - 1)][0]
        return np.array(pat.alpha.words), np.array(pat.beta.words)

    def draw(self, n: int, rng=None) -> ErrorPattern:
        a, b = self._draw_words(n, as_rng(rng))
        return ErrorPattern(BitVector.from_words(a, n), BitVector.from_words(b, n))

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "fixed":
            out.update(alpha=self.pattern.alpha.to_string(), beta=self.pattern.beta.to_string())
        elif self.kind == "iid":
            out["p"] = self.p_flip
        elif self.kind == "custom":
            out["support"] = len(self.distribution)
        return out


@dataclass(frozen=True)
class RunRecord:
    params: ProtocolParams
    seed: Optional[int]
    pattern: ErrorPattern
    schedule: KeySchedule
    u_A: BitVector
    u_B: BitVector
    v_A: BitVector
    v_B: BitVector
    w_A: BitVector
    w_B: BitVector
    s: DecodeResult
    t: DecodeResult
    accepted: bool
    key_A: Optional[BitVector]
    key_B: Optional[BitVector]

    @property
    def L(self) -> BitMatrix:
        return self.schedule.L

    @property
    def failed_tests(self) -> Tuple[str, ...]:
        """Which decodes came back empty: a subset of ('s', 't')."""
        return tuple(name for name, res in (("s", self.s), ("t", self.t)) if res is None)

    @property
    def mismatch(self) -> bool:
        return self.accepted and self.key_A != self.key_B


def splitmix64(x: int) -> int:
    """The SplitMix64 output function: a bijective 64-bit mix."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def child_seed(master_seed: int, run_index: int) -> int:
    """Seed of run ``run_index`` in a batch: splitmix64(master_seed XOR run_index).

    Master seeds that differ only in low bits share run streams (seed 1 run
    0 is seed 0 run 1), so independent batches should use well-separated
    master seeds.
    """
    return splitmix64((master_seed ^ run_index) & _MASK64)


def _decode(H: BitMatrix, y: BitVector, r: int) -> DecodeResult:
    return g_ball(H, y, BallSpec(H.cols, r), max_work=MAX_WORK)


def _finish(params, seed, pattern, ks, u_A, u_B, v_A, v_B, w_A, w_B) -> RunRecord:
    # decisions depend only on L and the announced syndrome differences
    s = _decode(ks.L1, u_A + u_B, params.r)
    t = _decode(ks.M2, v_A + v_B, params.r)
    accepted = s is not None and t is not None
    key_A = w_A if accepted else None
    key_B = (w_B + ks.M3 @ t) if accepted else None
    return RunRecord(params, seed, pattern, ks, u_A, u_B, v_A, v_B, w_A, w_B, s, t,
                     accepted, key_A, key_B)


def run(params: ProtocolParams, eve: EveModel, backend: str = "fast", rng=None,
        schedule: Optional[KeySchedule] = None, seed: Optional[int] = None) -> RunRecord:
    """One protocol run.

    ``rng`` may be a Generator or an integer seed.  A fixed ``schedule``
    replaces the random choice of L (its draws are then skipped).
    """
    if backend not in ("fast", "statevector"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "statevector" and params.n > 4:
        raise ResourceError(f"the statevector backend is limited to n <= 4, got n={params.n}")
    if seed is None and not isinstance(rng, np.random.Generator) and rng is not None:
        seed = int(rng)
    rng = as_rng(rng)
    n, k = params.n, params.k
    eve.check(n)
    a_w, b_w = eve._draw_words(n, rng)
    pattern = ErrorPattern(BitVector.from_words(a_w, n), BitVector.from_words(b_w, n))

    if backend == "statevector":
        ks = schedule if schedule is not None else sample_key_schedule(n, k, rng)
        _check_schedule(ks, params)
        o = oracle_protocol_run(ks, BellIndex(pattern.alpha, pattern.beta), rng)
        return _finish(params, seed, pattern, ks, o.u_A, o.u_B, o.v_A, o.v_B, o.w_A, o.w_B)

    if schedule is None:
        L1w, tail = _schedule_blocks(rng, n, k)
    else:
        _check_schedule(schedule, params)
        L1w, tail = np.array(schedule.L1.words), np.array(schedule.M.words[k:])
    u_A = BitVector.from_words(random_words(rng, 1, k)[0], k)
    v_A = BitVector.from_words(random_words(rng, 1, k)[0], k)
    w_A = BitVector.from_words(random_words(rng, 1, n - 2 * k)[0], n - 2 * k)
    ks = schedule if schedule is not None else _complete_schedule(rng, n, k, L1w, tail)
    u_B = u_A + ks.L1 @ pattern.alpha
    v_B = v_A + ks.M2 @ pattern.beta
    w_B = w_A + ks.M3 @ pattern.beta
    return _finish(params, seed, pattern, ks, u_A, u_B, v_A, v_B, w_A, w_B)


def _check_schedule(ks: KeySchedule, params: ProtocolParams) -> None:
    if (ks.n, ks.k) != (params.n, params.k):
        raise DimensionError(f"schedule is for n={ks.n}, k={ks.k}, params say n={params.n}, k={params.k}")


def fast_outcome_law(ks: KeySchedule, pattern: ErrorPattern) -> Dict[tuple, Fraction]:
    """Exact law of (u_A, u_B, v_A, v_B, w_A, w_B) under the fast backend for a fixed L."""
    n, k = ks.n, ks.k
    du, dv, dw = ks.L1 @ pattern.alpha, ks.M2 @ pattern.beta, ks.M3 @ pattern.beta
    p = Fraction(1, 2**n)
    law = {}
    for bits in itertools.product((0, 1), repeat=n):
        u = BitVector(list(bits[:k]))
        v = BitVector(list(bits[k:2 * k]))
        w = BitVector(list(bits[2 * k:]))
        law[(u, u + du, v, v + dv, w, w + dw)] = p
    return law


@dataclass
class BatchSummary:
    params: ProtocolParams
    eve: dict
    backend: str
    seed: int
    trials: int
    accepts: int = 0
    mismatches: int = 0
    aborts: Dict[str, int] = field(default_factory=lambda: {"s": 0, "t": 0, "both": 0})
    wallclock_ms: float = 0.0

    @property
    def bound_2uh(self) -> float:
        return self.params.bound_2uh

    def run_seeds(self) -> List[int]:
        return [child_seed(self.seed, i) for i in range(self.trials)]

    def merge(self, other: "BatchSummary") -> "BatchSummary":
        out = BatchSummary(self.params, self.eve, self.backend, self.seed, self.trials + other.trials,
                           self.accepts + other.accepts, self.mismatches + other.mismatches,
                           {key: self.aborts[key] + other.aborts[key] for key in self.aborts},
                           self.wallclock_ms + other.wallclock_ms)
        return out

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "schema": SUMMARY_SCHEMA,
            "version": SUMMARY_VERSION,
            "library_version": __version__,
            "params": self.params.to_dict(),
            "eve": self.eve,
            "backend": self.backend,
            "seed": self.seed,
            "trials": self.trials,
            "accepts": self.accepts,
            "mismatches": self.mismatches,
            "aborts": dict(self.aborts),
            "bound_2uh": self.bound_2uh,
        }
        if timing:
            out["wallclock_ms"] = round(self.wallclock_ms, 3)
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=False)


def _fast_counts(params: ProtocolParams, eve: EveModel, rng: np.random.Generator):
    """Accept/abort/mismatch outcome of one fast run without building the full record."""
    n, k = params.n, params.k
    a_w, b_w = eve._draw_words(n, rng)
    H1, tail = _schedule_blocks(rng, n, k, form_l1=False)
    s_st, t_st, mism, _, _, _, _ = K.trial_decode(H1, tail, k, a_w, b_w, n, params.r, MAX_WORK, TABLE_CAP)
    if s_st == 2 or t_st == 2:
        raise BallTooLarge(f"decoding exceeded the work limit (n={n}, r={params.r})")
    return s_st == 0, t_st == 0, bool(mism)


def run_batch(params: ProtocolParams, eve: EveModel, backend: str = "fast", trials: int = 1,
              seed: int = 0, transcript_dir=None, schedule: Optional[KeySchedule] = None) -> BatchSummary:
    """Run ``trials`` independent runs; run i uses the stream seeded by ``child_seed(seed, i)``.

    Mismatches are counted among accepting runs only.  With
    ``transcript_dir`` every run's transcript is written there as
    ``run-<index>.txt``.  A fixed ``schedule`` is used by every run.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    eve.check(params.n)
    if backend == "statevector" and params.n > 4:
        raise ResourceError(f"the statevector backend is limited to n <= 4, got n={params.n}")
    summary = BatchSummary(params, eve.describe(), backend, seed, trials)
    start = time.perf_counter()
    if schedule is not None:
        _check_schedule(schedule, params)
    need_records = backend != "fast" or transcript_dir is not None or schedule is not None
    if transcript_dir is not None:
        import pathlib
        tdir = pathlib.Path(transcript_dir)
        tdir.mkdir(parents=True, exist_ok=True)
    for i in range(trials):
        cs = child_seed(seed, i)
        rng = np.random.default_rng(cs)
        if need_records:
            rec = run(params, eve, backend, rng, schedule=schedule, seed=cs)
            s_ok, t_ok, mism = rec.s is not None, rec.t is not None, rec.mismatch
            if transcript_dir is not None:
                (tdir / f"run-{i:06d}.txt").write_text(transcript_serialize(rec))
        else:
            s_ok, t_ok, mism = _fast_counts(params, eve, rng)
        if s_ok and t_ok:
            summary.accepts += 1
            summary.mismatches += int(mism)
        elif not s_ok and not t_ok:
            summary.aborts["both"] += 1
        else:
            summary.aborts["s" if not s_ok else "t"] += 1
    summary.wallclock_ms = (time.perf_counter() - start) * 1e3
    return summary


def accept_probability(params: ProtocolParams, eve: EveModel) -> float:
    """Probability mass of patterns whose bit and phase parts both have weight <= r.

    This is the ideal acceptance probability; the real protocol's sits
    within ``params.acceptance_slack`` of it.
    """
    eve.check(params.n)
    r = params.r
    if eve.kind == "none":
        return 1.0
    if eve.kind == "fixed":
        return 1.0 if eve.pattern.in_ball(r) else 0.0
    if eve.kind == "iid":
        return float(binom.cdf(r, params.n, eve.p_flip)) ** 2
    return float(math.fsum(p for pat, p in eve.distribution if pat.in_ball(r)))


# --- transcripts -----------------------------------------------------------

TRANSCRIPT_HEADER = "transcript 1"


class TranscriptError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Transcript:
    """The public messages of one run, in the order they are sent."""

    n: int
    k: int
    r: int
    L: BitMatrix
    u_A: BitVector
    u_B: BitVector
    v_A: BitVector
    v_B: BitVector
    s: DecodeResult
    t: DecodeResult

    @property
    def accepted(self) -> bool:
        return self.s is not None and self.t is not None

    @classmethod
    def from_record(cls, rec: RunRecord) -> "Transcript":
        p = rec.params
        return cls(p.n, p.k, p.r, rec.L, rec.u_A, rec.u_B, rec.v_A, rec.v_B, rec.s, rec.t)

    def serialize(self) -> str:
        def dec(x: DecodeResult) -> str:
            return "bottom" if x is None else x.to_hex()

        lines = [
            TRANSCRIPT_HEADER,
            f"n {self.n}",
            f"k {self.k}",
            f"r {self.r}",
            "received alice",
            "received bob",
            "L " + " ".join(self.L.row(i).to_hex() for i in range(self.n)),
            f"u_A {self.u_A.to_hex()}",
            f"u_B {self.u_B.to_hex()}",
            f"v_A {self.v_A.to_hex()}",
            f"v_B {self.v_B.to_hex()}",
            f"s {dec(self.s)}",
            f"t {dec(self.t)}",
        ]
        if self.accepted:
            lines.append("decision accept")
        else:
            failed = [name for name, x in (("s", self.s), ("t", self.t)) if x is None]
            lines.append("decision reject " + " ".join(failed))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "Transcript":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        expected = ["transcript", "n", "k", "r", "received", "received", "L",
                    "u_A", "u_B", "v_A", "v_B", "s", "t", "decision"]
        if len(lines) != len(expected):
            raise TranscriptError(min(len(lines), len(expected)) + 1,
                                  f"expected {len(expected)} lines, found {len(lines)}")
        fields: Dict[str, str] = {}
        for lineno, (line, key) in enumerate(zip(lines, expected), 1):
            head, sep, rest = line.partition(" ")
            if head != key or not sep:
                raise TranscriptError(lineno, f"expected '{key} ...', got {line!r}")
            fields[key if key != "received" else f"received{lineno}"] = rest
        if lines[0] != TRANSCRIPT_HEADER:
            raise TranscriptError(1, f"unsupported header {lines[0]!r}")
        if fields["received5"] != "alice":
            raise TranscriptError(5, "expected 'received alice'")
        if fields["received6"] != "bob":
            raise TranscriptError(6, "expected 'received bob'")

        def integer(lineno, key):
            try:
                val = int(fields[key])
            except ValueError:
                raise TranscriptError(lineno, f"{key} must be an integer") from None
            if val < 0:
                raise TranscriptError(lineno, f"{key} must be non-negative")
            return val

        n, k, r = integer(2, "n"), integer(3, "k"), integer(4, "r")
        if not (1 <= k and 2 * k < n and 2 * r <= n):
            raise TranscriptError(4, f"inconsistent parameters n={n}, k={k}, r={r}")

        def vec(lineno, key, length):
            try:
                return BitVector.from_hex(fields[key], length)
            except ValueError as exc:
                raise TranscriptError(lineno, str(exc)) from None

        rows = fields["L"].split(" ")
        if len(rows) != n:
            raise TranscriptError(7, f"L needs {n} rows, found {len(rows)}")
        try:
            L = BitMatrix.from_rows([BitVector.from_hex(x, n) for x in rows])
        except ValueError as exc:
            raise TranscriptError(7, str(exc)) from None
        u_A, u_B = vec(8, "u_A", k), vec(9, "u_B", k)
        v_A, v_B = vec(10, "v_A", k), vec(11, "v_B", k)
        s = None if fields["s"] == "bottom" else vec(12, "s", n)
        t = None if fields["t"] == "bottom" else vec(13, "t", n)
        out = cls(n, k, r, L, u_A, u_B, v_A, v_B, s, t)
        if fields["decision"] != out.serialize().rsplit("\n", 2)[-2].partition(" ")[2]:
            raise TranscriptError(14, f"decision {fields['decision']!r} does not match s and t")
        return out


def transcript_serialize(rec: RunRecord) -> str:
    return Transcript.from_record(rec).serialize()


def transcript_parse(text: str) -> Transcript:
    return Transcript.parse(text)
