import math
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from tuhqkd.f2core import BitVector, DimensionError, key_schedule, sample_key_schedule
from tuhqkd.hashball import BallSpec, g_ball
from tuhqkd.pauli import ResourceError
from tuhqkd.protocol import (ErrorPattern, EveModel, ProtocolParams, Transcript, TranscriptError,
                             accept_probability, child_seed, fast_outcome_law, run, run_batch,
                             splitmix64, transcript_parse, transcript_serialize)

DATA = Path(__file__).parent / "data"


def test_params_validation():
    with pytest.raises(ValueError):
        ProtocolParams(8, 4, 1)  # needs 2k < n
    with pytest.raises(ValueError):
        ProtocolParams(8, 3, 5)  # needs 2r <= n
    p = ProtocolParams(256, 100, 8)
    assert p.key_length == 56
    assert p.bound_2uh == pytest.approx(2 * 2 ** (-100 + 256 * 0.20062232431271465))


def test_splitmix_reference():
    # first outputs of the reference SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert child_seed(5, 3) == splitmix64(6)


def test_eve_parse():
    assert EveModel.parse("none").kind == "none"
    assert EveModel.parse("iid:p=0.25").p_flip == 0.25
    fixed = EveModel.parse("fixed:alpha=100,beta=001")
    assert fixed.pattern.alpha == BitVector("100")
    for bad in ("iid", "iid:q=1", "fixed:alpha=1", "gauss:p=1", "iid:p=2"):
        with pytest.raises(ValueError):
            EveModel.parse(bad)
    with pytest.raises(DimensionError):
        fixed.check(4)


@pytest.mark.parametrize("name", ["golden_n8_k3_r1.txt", "golden_n8_k3_r1_reject.txt"])
def test_golden_transcripts(name):
    text = (DATA / name).read_text()
    tr = transcript_parse(text)
    assert tr.serialize() == text
    # the decisions follow from the public messages alone
    ks = key_schedule(tr.L, tr.k)
    spec = BallSpec(tr.n, tr.r)
    assert g_ball(ks.L1, tr.u_A + tr.u_B, spec, "scan") == tr.s
    assert g_ball(ks.M2, tr.v_A + tr.v_B, spec, "scan") == tr.t


def test_golden_reproduces():
    rec = run(ProtocolParams(8, 3, 1), EveModel.parse("fixed:alpha=00100000,beta=00000001"), "fast", 1234)
    assert transcript_serialize(rec) == (DATA / "golden_n8_k3_r1.txt").read_text()
    rec = run(ProtocolParams(8, 3, 1), EveModel.parse("fixed:alpha=11000000,beta=00000111"), "fast", 2)
    assert transcript_serialize(rec) == (DATA / "golden_n8_k3_r1_reject.txt").read_text()


def test_transcript_errors_name_the_line():
    lines = (DATA / "golden_n8_k3_r1.txt").read_text().split("\n")
    lines[8] = "u_B zz"
    with pytest.raises(TranscriptError) as err:
        transcript_parse("\n".join(lines))
    assert err.value.lineno == 9


def test_run_relations_and_keys(rng):
    params = ProtocolParams(64, 20, 3)
    eve = EveModel.iid(0.02)
    for i in range(30):
        rec = run(params, eve, "fast", rng)
        ks, pat = rec.schedule, rec.pattern
        assert rec.u_B == rec.u_A + ks.L1 @ pat.alpha
        assert rec.v_B == rec.v_A + ks.M2 @ pat.beta
        assert rec.w_B == rec.w_A + ks.M3 @ pat.beta
        if rec.accepted and rec.t == pat.beta:
            assert rec.key_A == rec.key_B


def test_run_is_deterministic():
    params, eve = ProtocolParams(40, 10, 2), EveModel.iid(0.05)
    assert transcript_serialize(run(params, eve, "fast", 99)) == transcript_serialize(run(params, eve, "fast", 99))


def test_batch_matches_individual_runs():
    params, eve = ProtocolParams(48, 14, 3), EveModel.iid(0.06)
    s = run_batch(params, eve, "fast", 200, seed=11)
    recs = [run(params, eve, "fast", child_seed(11, i)) for i in range(200)]
    assert s.accepts == sum(r.accepted for r in recs)
    assert s.mismatches == sum(r.accepted and r.mismatch for r in recs)
    assert s.aborts["both"] == sum(r.s is None and r.t is None for r in recs)
    again = run_batch(params, eve, "fast", 200, seed=11)
    assert again.to_dict(timing=False) == s.to_dict(timing=False)


def test_batch_writes_transcripts(tmp_path):
    run_batch(ProtocolParams(8, 3, 1), EveModel.none(), "fast", 3, seed=1, transcript_dir=tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["run-000000.txt", "run-000001.txt", "run-000002.txt"]
    assert transcript_parse((tmp_path / files[0]).read_text()).accepted


def test_fixed_schedule_batch():
    ks = sample_key_schedule(8, 3, 5)
    s = run_batch(ProtocolParams(8, 3, 1), EveModel.none(), "fast", 20, seed=3, schedule=ks)
    assert s.accepts == 20


def test_statevector_limits():
    with pytest.raises(ResourceError):
        run(ProtocolParams(5, 2, 1), EveModel.none(), "statevector", 0)


def test_statevector_agrees_with_law():
    ks = sample_key_schedule(3, 1, 8)
    pat = ErrorPattern(BitVector("110"), BitVector("011"))
    law = fast_outcome_law(ks, pat)
    assert len(law) == 8 and sum(law.values()) == 1
    params, eve = ProtocolParams(3, 1, 1), EveModel.fixed(pat)
    for i in range(100):
        rec = run(params, eve, "statevector", i, schedule=ks)
        assert (rec.u_A, rec.u_B, rec.v_A, rec.v_B, rec.w_A, rec.w_B) in law


def test_accept_probability_iid():
    params, eve = ProtocolParams(64, 24, 2), EveModel.iid(0.02)
    p = accept_probability(params, eve)
    binom = sum(math.comb(64, j) * 0.02**j * 0.98 ** (64 - j) for j in range(3))
    assert p == pytest.approx(binom**2, rel=1e-12)
    s = run_batch(params, eve, "fast", 3000, seed=5)
    sigma = math.sqrt(p * (1 - p) / 3000)
    assert abs(s.accepts / 3000 - p) <= 4 * sigma + params.acceptance_slack
