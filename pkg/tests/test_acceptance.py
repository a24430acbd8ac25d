"""One test per acceptance criterion; each prints a PASS/FAIL line with its evidence."""

import math
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from tuhqkd import pauli, protocol
from tuhqkd.f2core import (BitVector, collision_lower_bound, exact_collision_probability,
                           sample_full_rank, sample_key_schedule)
from tuhqkd.hashball import BallSpec, ball_iter, ball_size, binary_entropy
from tuhqkd.protocol import ErrorPattern, EveModel, ProtocolParams, fast_outcome_law, run, run_batch
from tuhqkd.rates import (SamplingQuery, TuhQuery, eps_pe, min_blocksize, sampling_optimize,
                          sampling_upper_bound, tuh_report)
from tuhqkd.selftest import full_rank_rows, kernel_hits, membership_exhaustive


@pytest.fixture
def verdict(capsys):
    def emit(number, parts):
        ok = all(p for _, p in parts)
        detail = "; ".join(f"{'ok' if p else 'FAILED'} {name}" for name, p in parts)
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        failed = [name for name, p in parts if not p]
        assert not failed, f"criterion {number} failed: {failed}"
    return emit


def test_criterion_01_headline_output(verdict):
    start = time.perf_counter()
    outs = {r: tuh_report(TuhQuery(3100, 0.0451, 1e-80, r)).output_size
            for r in ("floor_r", "ceil_r", "rate_direct")}
    elapsed = time.perf_counter() - start
    verdict(1, [
        (f"outputs {outs} within 385+-8", all(abs(v - 385) <= 8 for v in outs.values())),
        (f"floor_r gives 388 ({outs['floor_r']})", outs["floor_r"] == 388),
        (f"runtime {elapsed:.4f}s < 0.1s", elapsed < 0.1),
    ])


def test_criterion_02_block_size(verdict):
    start = time.perf_counter()
    sizes = {r: min_blocksize(0.0451, 1e-6, 6, r) for r in ("floor_r", "ceil_r", "rate_direct")}
    elapsed = time.perf_counter() - start
    verdict(2, [
        (f"floor_r n={sizes['floor_r']} in [190, 215]", 190 <= sizes["floor_r"] <= 215),
        (f"all roundings {sizes} in [190, 215]", all(190 <= v <= 215 for v in sizes.values())),
        (f"runtime {elapsed:.4f}s < 1s", elapsed < 1.0),
    ])


def test_criterion_03_sandwich(verdict):
    rng = np.random.default_rng(3)
    checked, bad = 0, []
    while checked < 100:
        n = int(10 ** rng.uniform(2.5, 7))
        delta = float(rng.uniform(0.0, 0.11))
        eps = float(10 ** -rng.uniform(1, 60))
        rep = tuh_report(TuhQuery(n, delta, eps, "rate_direct"))
        if not rep.feasible:
            continue
        checked += 1
        lead = 4 * math.log2(1 / eps)
        # exact form: deviation * n = 2k - 2 n h(delta), with k the ceiling of n h + 2 log2(1/eps) + 5
        dn = 2 * rep.k - 2 * n * binary_entropy(delta)
        if not (lead + 10 - 1e-7 <= dn <= lead + 12 + 1e-7) or abs(dn - rep.deviation * n) > 1e-6 * n:
            bad.append((n, delta, eps))
    verdict(3, [(f"{checked} feasible triples, {len(bad)} outside the sandwich", not bad)])


def test_criterion_04_two_universality(verdict):
    start = time.perf_counter()
    bad = []
    for n in range(1, 5):
        for k in range(1, n + 1):
            mats = full_rank_rows(k, n)
            want = exact_collision_probability(k, n)
            if want != collision_lower_bound(2**n, 2**k):
                bad.append(("bound", k, n))
            for x in range(1, 2**n):
                if Fraction(int(kernel_hits(mats, x).sum()), len(mats)) != want:
                    bad.append((k, n, x))
    elapsed = time.perf_counter() - start
    verdict(4, [
        (f"exact collision probability for all n<=4, k<=n, x!=0 ({len(bad)} mismatches)", not bad),
        (f"runtime {elapsed:.2f}s < 30s", elapsed < 30),
    ])


def test_criterion_05_membership(verdict):
    membership_exhaustive(2, 1, 1)  # compile the decoder kernels outside the timed region
    start = time.perf_counter()
    count, size, total, per_alpha, disagree = membership_exhaustive(4, 3, 1, scan_every=10**9)
    elapsed = time.perf_counter() - start
    eps = exact_collision_probability(3, 4)
    cap = 2 ** (-3 + 4 * binary_entropy(0.25))
    verdict(5, [
        (f"{count} matrices x 16 alphas", count == 2520),
        (f"failure fraction {total} <= {eps} * {size}", total <= eps * size),
        (f"worst single alpha {max(per_alpha)} <= {eps * size}", max(per_alpha) <= eps * size),
        (f"failure fraction {float(total):.4f} < 2^(-k+n h) = {cap:.4f}", float(total) < cap),
        (f"runtime {elapsed:.2f}s < 10s", elapsed < 10),
    ])


def test_criterion_06_backend_equivalence(verdict):
    start = time.perf_counter()
    params = ProtocolParams(3, 1, 1)
    patterns = [("000", "000"), ("100", "000"), ("010", "011"), ("111", "101")]
    runs = 10_000
    relations_ok, chi_p, tvs = True, [], []
    for j, (a, b) in enumerate(patterns):
        pat = ErrorPattern(BitVector(a), BitVector(b))
        eve = EveModel.fixed(pat)
        ks = sample_key_schedule(3, 1, 1000 + j)
        counts = Counter()
        for i in range(runs):
            rec = run(params, eve, "statevector", protocol.child_seed((j + 1) << 32, i), schedule=ks)
            relations_ok &= (rec.u_B == rec.u_A + ks.L1 @ pat.alpha and rec.v_B == rec.v_A + ks.M2 @ pat.beta
                             and rec.w_B == rec.w_A + ks.M3 @ pat.beta)
            counts[(rec.u_A, rec.u_B, rec.v_A, rec.v_B, rec.w_A, rec.w_B)] += 1
        law = fast_outcome_law(ks, pat)
        alice = Counter()
        for key, c in counts.items():
            alice[(key[0], key[2], key[4])] += c
        cells = [alice.get((key[0], key[2], key[4]), 0) for key in law]
        chi_p.append(float(chisquare(cells).pvalue))
        tvs.append(float(0.5 * sum(abs(counts.get(key, 0) / runs - float(p)) for key, p in law.items())
                   + 0.5 * sum(c / runs for key, c in counts.items() if key not in law)))
    # fresh random L in every run
    fresh_ok = True
    for i in range(500):
        pat = patterns[i % 4]
        rec = run(params, EveModel.parse(f"fixed:alpha={pat[0]},beta={pat[1]}"), "statevector", i)
        ks = rec.schedule
        fresh_ok &= (rec.u_B == rec.u_A + ks.L1 @ rec.pattern.alpha
                     and rec.v_B == rec.v_A + ks.M2 @ rec.pattern.beta
                     and rec.w_B == rec.w_A + ks.M3 @ rec.pattern.beta)
    elapsed = time.perf_counter() - start
    verdict(6, [
        ("offset relations in all 40000 fixed-L runs", relations_ok),
        ("offset relations in 500 fresh-L runs", fresh_ok),
        (f"chi-square p-values {[round(p, 3) for p in chi_p]} > 0.01", min(chi_p) > 0.01),
        (f"total variation {[round(t, 4) for t in tvs]} < 0.02", max(tvs) < 0.02),
        (f"runtime {elapsed:.1f}s < 120s", elapsed < 120),
    ])


def test_criterion_07_stabilizer_identities(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = dict.fromkeys(("shift", "coarse_graining", "dephasing", "transpose_trick", "bell_action"), 0.0)
    instances = 50
    for _ in range(instances):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, n + 1))
        t = pauli.random_commuting_tuple(n, m, rng)
        while True:
            hx, hz = BitVector.random(n, rng), BitVector.random(n, rng)
            if not hx.dot(hz):
                break
        worst["shift"] = max(worst["shift"], pauli.shift_residual(t, hx, hz))
        L = sample_full_rank(int(rng.integers(1, m + 1)), m, rng)
        worst["coarse_graining"] = max(worst["coarse_graining"], pauli.coarse_graining_residual(t, L))
        worst["dephasing"] = max(worst["dephasing"], pauli.dephasing_residual(n, BitVector.random(n, rng)))
        dim = 1 << n
        mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        worst["transpose_trick"] = max(worst["transpose_trick"], *pauli.transpose_trick_residuals(mat))
        idx = pauli.BellIndex(BitVector.random(n, rng), BitVector.random(n, rng))
        worst["bell_action"] = max(worst["bell_action"], pauli.bell_action_residual(t, idx))
    elapsed = time.perf_counter() - start
    parts = [(f"{name} worst residual {v:.2e} over {instances} instances", v <= 1e-9) for name, v in worst.items()]
    parts.append((f"runtime {elapsed:.1f}s < 60s", elapsed < 60))
    verdict(7, parts)


def test_criterion_08_end_to_end(verdict):
    params = ProtocolParams(256, 100, 8)
    eve = EveModel.iid(0.001)
    run_batch(params, eve, "fast", 2, seed=1 << 40)  # compile the kernels outside the timed region
    start = time.perf_counter()
    s = run_batch(params, eve, "fast", 100_000, seed=8)
    elapsed = time.perf_counter() - start
    verdict(8, [
        (f"mismatches {s.mismatches} == 0 (bound {params.bound_2uh:.2e})", s.mismatches == 0),
        (f"accepts {s.accepts} == 100000", s.accepts == 100_000),
        (f"runtime {elapsed:.1f}s < 60s", elapsed < 60),
    ])


def _robust_eve(n, r, mass_in, rng, support=200):
    """Bell-diagonal adversary: half its patterns inside the ball, half just outside."""
    def pattern(lo, hi):
        wa, wb = (int(w) for w in rng.integers(lo, hi + 1, size=2))
        return ErrorPattern(BitVector.from_support(n, rng.choice(n, wa, replace=False)),
                            BitVector.from_support(n, rng.choice(n, wb, replace=False)))
    inside = [pattern(0, r) for _ in range(support // 2)]
    outside = []
    while len(outside) < support // 2:
        p = pattern(0, r + 3)
        if not p.in_ball(r):
            outside.append(p)
    half = support // 2
    dist = [(p, mass_in / half) for p in inside] + [(p, (1 - mass_in) / half) for p in outside]
    return EveModel.custom(dist)


def test_criterion_09_robustness(verdict):
    params = ProtocolParams(64, 24, 2)
    eve = _robust_eve(64, 2, 0.7, np.random.default_rng(9))
    ideal = protocol.accept_probability(params, eve)
    trials = 100_000
    s = run_batch(params, eve, "fast", trials, seed=9)
    rate = s.accepts / trials
    sigma = math.sqrt(0.7 * 0.3 / trials)
    tol = max(3 * sigma, params.acceptance_slack)
    verdict(9, [
        (f"in-ball mass {ideal:.6f} == 0.7", abs(ideal - 0.7) < 1e-12),
        (f"accept rate {rate:.5f} within {tol:.5f} of 0.7", abs(rate - 0.7) <= tol),
    ])


def test_criterion_10_sampling(verdict):
    start = time.perf_counter()
    rep = sampling_optimize(SamplingQuery(3100, 0.0451, 1e-6))
    bound = sampling_upper_bound(3100, 0.0451, 1e-6)
    elapsed = time.perf_counter() - start
    n, delta = 3100, 0.0451
    floor_ok = True
    for n_pe in np.linspace(1, n // 2, 10).astype(int):
        for nu in np.linspace(0.005, 0.45, 5):
            worst = eps_pe(n, n_pe, delta, nu, nu * np.linspace(0.001, 0.999, 999)).min()
            floor_ok &= worst >= 2 * math.exp(-2 * n_pe * nu**2) * (1 - 1e-12)
    verdict(10, [
        (f"n_out {rep.n_out} in [2, 12]", 2 <= rep.n_out <= 12),
        (f"rate {rep.rate:.4f} <= bound {bound.bound_rate:.4f}", rep.rate <= bound.bound_rate),
        (f"witness epsilon {rep.eps_achieved:.3e} <= 1e-6", rep.eps_achieved <= 1e-6 * (1 + 1e-12)),
        ("eps_pe >= 2 exp(-2 n_pe nu^2) on a 50-point (n_pe, nu) grid", floor_ok),
        (f"runtime {elapsed:.1f}s < 30s", elapsed < 30),
    ])


def test_criterion_11_asymptotics(verdict):
    delta, eps = 0.0451, 1e-6
    grid = np.unique(np.rint(np.geomspace(1e3, 1e7, 9)).astype(int))
    lead = 4 * math.log2(1 / eps)
    asym = 1 - 2 * binary_entropy(delta)
    tuh_ok, scaled = True, []
    for n in grid:
        t = tuh_report(TuhQuery(int(n), delta, eps, "rate_direct"))
        if t.feasible:
            tuh_ok &= lead + 10 - 1e-6 <= t.deviation * n <= lead + 12 + 1e-6
    c1 = sampling_upper_bound(10**7, delta, eps).c1
    for n in grid[-3:]:
        rep = sampling_optimize(SamplingQuery(int(n), delta, eps))
        scaled.append(float((asym - rep.rate) * n ** (1 / 3)))
    verdict(11, [
        (f"hashing deviation * n within [{lead + 10:.1f}, {lead + 12:.1f}] on {len(grid)} sizes", tuh_ok),
        (f"sampling deviation * n^(1/3) {[round(v, 3) for v in scaled]} >= 0.8 c1 = {0.8 * c1:.3f}",
         min(scaled) >= 0.8 * c1),
    ])
