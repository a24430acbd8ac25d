"""Desk-scale invariant suites behind ``tuhqkd selftest``.

Each suite returns a list of :class:`Check` results.  Expected values are
either exact rationals computed here by an independent route or frozen
constants, so a corrupted formula anywhere in the library shows up as a
failing check.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__, f2core, hashball, pauli, protocol, rates
from .f2core import BitMatrix, BitVector

SCHEMA = "tuhqkd.selftest"
DEFAULT_SEED = 0x5EED20017

# frozen values of h, computed once in 30-digit arithmetic
H_QUARTER = 0.8112781244591328
H_0451 = 0.26520561658385874


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def _check(name: str, cond, detail: str = "") -> Check:
    return Check(name, bool(cond), detail)


# --- exhaustive helpers on integer rows ----------------------------------------

_PARITY = np.array([bin(i).count("1") & 1 for i in range(256)], np.uint8)


def full_rank_rows(k: int, n: int) -> np.ndarray:
    """All rank-k k x n matrices as an array of row integers, via subset spans."""
    rows = np.array(list(itertools.product(range(1, 1 << n), repeat=k)), np.int64).reshape(-1, k)
    ok = np.ones(len(rows), bool)
    for mask in range(1, 1 << k):
        acc = np.zeros(len(rows), np.int64)
        for j in range(k):
            if mask >> j & 1:
                acc ^= rows[:, j]
        ok &= acc != 0
    return rows[ok]


def kernel_hits(rows: np.ndarray, x: int) -> np.ndarray:
    """Boolean per matrix: does L x = 0."""
    return (_PARITY[(rows & x) & 0xFF] == 0).all(axis=1)


def two_universality(max_n: int = 4) -> List[Check]:
    out = []
    for n in range(1, max_n + 1):
        for k in range(1, n + 1):
            mats = full_rank_rows(k, n)
            out.append(_check(f"count k={k} n={n}", len(mats) == f2core.count_full_rank(k, n),
                              f"{len(mats)} matrices"))
            want = f2core.exact_collision_probability(k, n)
            bound = f2core.collision_lower_bound(1 << n, 1 << k)
            probs = {Fraction(int(kernel_hits(mats, x).sum()), len(mats)) for x in range(1, 1 << n)}
            out.append(_check(f"collision k={k} n={n}", probs == {want} and want == bound,
                              f"got {sorted(probs)}, want {want}, bound {bound}"))
    return out


def membership_exhaustive(n: int = 4, k: int = 3, r: int = 1, scan_every: int = 97):
    """Fraction of (H, alpha) with f(alpha) != g(H, H alpha), per alpha and overall."""
    spec = hashball.BallSpec(n, r)
    size = hashball.ball_size(spec)
    mats = full_rank_rows(k, n)
    alphas = [BitVector.from_int(a, n) for a in range(1 << n)]
    fails = np.zeros(1 << n, np.int64)
    disagree = 0
    for i, rows in enumerate(mats):
        H = BitMatrix.from_rows([BitVector.from_int(int(v), n) for v in rows])
        for a, alpha in enumerate(alphas):
            y = H @ alpha
            g = hashball.g_ball(H, y, spec)
            if g != hashball.f_ball(alpha, spec):
                fails[a] += 1
            if i % scan_every == 0 and hashball.g_ball(H, y, spec, method="scan") != g:
                disagree += 1
    total = Fraction(int(fails.sum()), len(mats) << n)
    per_alpha = [Fraction(int(f), len(mats)) for f in fails]
    return len(mats), size, total, per_alpha, disagree


def membership_checks() -> List[Check]:
    n, k, r = 4, 3, 1
    count, size, total, per_alpha, disagree = membership_exhaustive(n, k, r)
    eps = f2core.exact_collision_probability(k, n)
    cap = 2.0 ** (-k + n * hashball.binary_entropy(r / n))
    return [
        _check("matrix count", count == 2520, f"{count}"),
        _check("ball size", size == 5, f"{size}"),
        _check("per-alpha union bound", max(per_alpha) <= eps * size, f"max {max(per_alpha)} vs {eps * size}"),
        _check("overall failure below collision bound", total <= eps * size, f"{total}"),
        _check("overall failure below entropy bound", float(total) < cap, f"{float(total):.4f} < {cap:.4f}"),
        _check("layered equals scan", disagree == 0, f"{disagree} disagreements"),
    ]


# --- suites ------------------------------------------------------------------

def suite_entropy(seed: int) -> List[Check]:
    h = hashball.binary_entropy
    return [
        _check("h(1/4)", abs(h(0.25) - H_QUARTER) < 1e-15, f"{h(0.25)!r}"),
        _check("h(0.0451)", abs(h(0.0451) - H_0451) < 1e-15, f"{h(0.0451)!r}"),
        _check("h endpoints", h(0.0) == 0.0 and h(1.0) == 0.0 and h(0.5) == 1.0),
        _check("ball sizes below 2^(n h(r/n))",
               all(hashball.ball_size(hashball.BallSpec(n, r)) < 2 ** (n * h(r / n))
                   for n in range(2, 40) for r in range(1, n // 2 + 1))),
    ]


def suite_f2core(seed: int) -> List[Check]:
    rng = np.random.default_rng(seed)
    out = two_universality(4)
    ok = True
    for n in (1, 5, 64, 65, 130):
        A = f2core.sample_invertible(n, rng)
        ok &= f2core.invert(A) @ A == BitMatrix.identity(n)
    out.append(_check("sampled matrices invert", ok))
    ks = f2core.sample_key_schedule(40, 9, rng)
    out.append(_check("schedule blocks satisfy L M^T = I", ks.L @ ks.M.T == BitMatrix.identity(40)))
    return out


def suite_hashball(seed: int) -> List[Check]:
    return membership_checks()


def suite_pauli(seed: int, instances: int = 12) -> List[Check]:
    rng = np.random.default_rng(seed)
    res: Dict[str, float] = {"shift": 0.0, "coarse_graining": 0.0, "dephasing": 0.0, "transpose_trick": 0.0, "bell_action": 0.0}
    for _ in range(instances):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, n + 1))
        t = pauli.random_commuting_tuple(n, m, rng)
        while True:
            hx, hz = BitVector.random(n, rng), BitVector.random(n, rng)
            if not hx.dot(hz):
                break
        res["shift"] = max(res["shift"], pauli.shift_residual(t, hx, hz))
        res["coarse_graining"] = max(res["coarse_graining"], pauli.coarse_graining_residual(t, f2core.sample_full_rank(
            int(rng.integers(1, m + 1)), m, rng)))
        res["dephasing"] = max(res["dephasing"], pauli.dephasing_residual(n, BitVector.random(n, rng)))
        dim = 1 << n
        res["transpose_trick"] = max(res["transpose_trick"], *pauli.transpose_trick_residuals(rng.normal(size=(dim, dim))))
        idx = pauli.BellIndex(BitVector.random(n, rng), BitVector.random(n, rng))
        res["bell_action"] = max(res["bell_action"], pauli.bell_action_residual(t, idx))
    return [_check(name, v <= pauli.TOL, f"max residual {v:.3g}") for name, v in res.items()]


def suite_protocol(seed: int) -> List[Check]:
    out = []
    params = protocol.ProtocolParams(3, 1, 1)
    relations = True
    for a, b in (("000", "000"), ("100", "000"), ("010", "001"), ("111", "101")):
        eve = protocol.EveModel.parse(f"fixed:alpha={a},beta={b}")
        for i in range(100):
            rec = protocol.run(params, eve, "statevector", protocol.child_seed(seed, i))
            ks, pat = rec.schedule, rec.pattern
            relations &= (rec.u_B == rec.u_A + ks.L1 @ pat.alpha and rec.v_B == rec.v_A + ks.M2 @ pat.beta
                          and rec.w_B == rec.w_A + ks.M3 @ pat.beta)
    out.append(_check("statevector offset relations", relations))
    big = protocol.ProtocolParams(256, 100, 8)
    s = protocol.run_batch(big, protocol.EveModel.iid(0.001), "fast", 500, seed)
    out.append(_check("n=256 batch has no key mismatch", s.mismatches == 0, f"{s.accepts} accepts"))
    rec = protocol.run(protocol.ProtocolParams(8, 3, 1), protocol.EveModel.iid(0.1), "fast", seed)
    text = protocol.transcript_serialize(rec)
    out.append(_check("transcript round trip", protocol.transcript_parse(text).serialize() == text))
    return out


def suite_rates(seed: int) -> List[Check]:
    out = []
    outs = {r: rates.tuh_report(rates.TuhQuery(3100, 0.0451, 1e-80, r)).output_size for r in rates.ROUNDINGS}
    out.append(_check("headline outputs", outs == {"floor_r": 388, "ceil_r": 380, "rate_direct": 382}, f"{outs}"))
    out.append(_check("min block size", rates.min_blocksize(0.0451, 1e-6, 6, "rate_direct") == 204))
    ok = True
    rng = np.random.default_rng(seed)
    for _ in range(40):
        n = int(rng.integers(500, 10**6))
        eps = 10.0 ** -float(rng.uniform(1, 40))
        d = float(rng.uniform(0.0, 0.1))
        rep = rates.tuh_report(rates.TuhQuery(n, d, eps, "rate_direct"))
        if rep.feasible:
            lead = -4 * math.log2(eps)
            ok &= lead + 10 - 1e-6 <= rep.deviation * n <= lead + 12 + 1e-6
    out.append(_check("deviation sandwich", ok))
    sr = rates.sampling_optimize(rates.SamplingQuery(3100, 0.0451, 1e-6))
    b = rates.sampling_upper_bound(3100, 0.0451, 1e-6)
    out.append(_check("sampling below its upper bound", sr.rate <= b.bound_rate, f"{sr.rate:.4f} <= {b.bound_rate:.4f}"))
    out.append(_check("sampling witness meets budget", sr.eps_achieved <= 1e-6 * (1 + 1e-9), f"{sr.eps_achieved:.3g}"))
    return out


SUITES: Dict[str, Callable[[int], List[Check]]] = {
    "entropy": suite_entropy,
    "f2core": suite_f2core,
    "hashball": suite_hashball,
    "pauli": suite_pauli,
    "protocol": suite_protocol,
    "rates": suite_rates,
}


def run_suites(names: Optional[Sequence[str]] = None, seed: int = DEFAULT_SEED) -> dict:
    """Run the named suites (all by default) and return an itemised JSON-ready report."""
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    results = []
    for name in names:
        start = time.perf_counter()
        try:
            checks = SUITES[name](seed)
        except Exception as exc:  # a crash is a failure, not an abort
            checks = [Check("crashed", False, f"{type(exc).__name__}: {exc}")]
        results.append({
            "suite": name,
            "passed": all(c.passed for c in checks),
            "seconds": round(time.perf_counter() - start, 3),
            "checks": [asdict(c) for c in checks],
        })
    failed = [r["suite"] for r in results if not r["passed"]]
    return {
        "schema": SCHEMA,
        "version": 1,
        "library_version": __version__,
        "seed": seed,
        "passed": not failed,
        "failed_suites": failed,
        "suites": results,
    }
