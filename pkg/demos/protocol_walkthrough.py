"""One small run of the protocol, step by step, then a check against the quantum oracle."""

from tuhqkd.f2core import BitVector
from tuhqkd.protocol import ErrorPattern, EveModel, ProtocolParams, run, transcript_serialize

params = ProtocolParams(n=8, k=3, r=1)
pattern = ErrorPattern(BitVector("00010000"), BitVector("00000010"))
eve = EveModel.fixed(pattern)

rec = run(params, eve, "fast", 7)
ks = rec.schedule
print("L (rows):")
for i in range(ks.n):
    print("  ", ks.L.row(i).to_string())
print("bit flips  ", pattern.alpha.to_string(), " phase flips", pattern.beta.to_string())
print("u_A + u_B  ", (rec.u_A + rec.u_B).to_string(), "= L1 alpha", (ks.L1 @ pattern.alpha).to_string())
print("v_A + v_B  ", (rec.v_A + rec.v_B).to_string(), "= M2 beta ", (ks.M2 @ pattern.beta).to_string())
print("decoded s  ", rec.s, "\ndecoded t  ", rec.t)
if rec.accepted:
    print("keys       ", rec.key_A.to_string(), rec.key_B.to_string(), "match" if not rec.mismatch else "MISMATCH")
# 3 check bits cannot separate 8-bit patterns reliably; the bound says as much
print(f"mismatch bound 2^(1-k+n h(r/n)) = {params.bound_2uh:.2f}")
print("\ntranscript:\n" + transcript_serialize(rec))

# the same protocol on an actual Bell state, three qubits per side
small = ProtocolParams(3, 1, 1)
flip = EveModel.fixed(ErrorPattern(BitVector("100"), BitVector("001")))
agree = 0
for seed in range(200):
    r = run(small, flip, "statevector", seed)
    s = r.schedule
    agree += (r.u_B == r.u_A + s.L1 @ r.pattern.alpha and r.v_B == r.v_A + s.M2 @ r.pattern.beta
              and r.w_B == r.w_A + s.M3 @ r.pattern.beta)
print(f"statevector runs obeying the offset relations: {agree}/200")
