import numpy as np
import pytest

from tuhqkd.f2core import BitMatrix, BitVector, sample_full_rank, sample_key_schedule
from tuhqkd.pauli import (TOL, BellIndex, InvalidTupleError, PauliTuple, ResourceError, StateVec,
                          ball_projector, bell_diagonal_state, bell_state, shift_residual,
                          coarse_graining_residual, dephasing_residual, transpose_trick_residuals, bell_action_residual,
                          measure_tuple, oracle_protocol_run, outcome_distribution, projector,
                          random_commuting_tuple)


def test_bell_states_orthonormal():
    n = 2
    vecs = [bell_state(BellIndex(BitVector.from_int(a, n), BitVector.from_int(b, n))).amplitudes
            for a in range(4) for b in range(4)]
    G = np.array([[np.vdot(u, v) for v in vecs] for u in vecs])
    assert np.allclose(G, np.eye(16))


def test_tuple_validation():
    with pytest.raises(InvalidTupleError):
        PauliTuple.z_type(BitMatrix(["11", "11"]))
    with pytest.raises(InvalidTupleError):
        # X1 and Z1 anticommute
        PauliTuple(BitMatrix(["10", "00"]), BitMatrix(["00", "10"]))


def test_projectors_resolve_identity(rng):
    t = random_commuting_tuple(3, 2, rng)
    total = sum(projector(t, BitVector.from_int(x, 2)) for x in range(4))
    assert np.allclose(total, np.eye(8))
    P = projector(t, BitVector("10"))
    assert np.allclose(P @ P, P)


def test_z_measurement_of_basis_state():
    t = PauliTuple.z_type(BitMatrix(["110", "011"]))
    state = StateVec.basis(3, 0b100)  # qubit 0 is the most significant bit
    out, post, prob = measure_tuple(state, t, 0)
    assert out == BitVector("10") and prob == pytest.approx(1.0)
    probs = {x: p for x, p, _ in outcome_distribution(state, t)}
    assert probs[(1, 0)] == pytest.approx(1.0)


@pytest.mark.parametrize("trial", range(10))
def test_stabilizer_identities(trial):
    rng = np.random.default_rng(trial)
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, n + 1))
    t = random_commuting_tuple(n, m, rng)
    while True:
        hx, hz = BitVector.random(n, rng), BitVector.random(n, rng)
        if not hx.dot(hz):
            break
    assert shift_residual(t, hx, hz) <= TOL
    assert coarse_graining_residual(t, sample_full_rank(int(rng.integers(1, m + 1)), m, rng)) <= TOL
    assert dephasing_residual(n, BitVector.random(n, rng)) <= TOL
    assert max(transpose_trick_residuals(rng.normal(size=(1 << n, 1 << n)))) <= TOL
    assert bell_action_residual(t, BellIndex(BitVector.random(n, rng), BitVector.random(n, rng))) <= TOL


def test_ball_projector_trace():
    n, r = 2, 1
    Pi = ball_projector(n, r)
    assert np.trace(Pi) == pytest.approx(3 * 3)
    rho = bell_diagonal_state({(BitVector("00"), BitVector("00")): 0.6,
                               (BitVector("11"), BitVector("00")): 0.4})
    assert np.trace(Pi @ rho @ Pi) == pytest.approx(0.6)


def test_oracle_relations(rng):
    ks = sample_key_schedule(3, 1, rng)
    idx = BellIndex(BitVector("101"), BitVector("011"))
    for _ in range(50):
        o = oracle_protocol_run(ks, idx, rng)
        assert o.u_B == o.u_A + ks.L1 @ idx.alpha
        assert o.v_B == o.v_A + ks.M2 @ idx.beta
        assert o.w_B == o.w_A + ks.M3 @ idx.beta


def test_oracle_size_limit():
    ks = sample_key_schedule(5, 2, 0)
    with pytest.raises(ResourceError):
        oracle_protocol_run(ks, BellIndex(BitVector.zeros(5), BitVector.zeros(5)), 0)
