"""Hashing versus sampling at a few thousand bits.

Prints the output size of the hashing protocol at n=3100 under each way
of rounding the ball radius, the smallest block giving 6 bits, and what
the optimised sampling protocol manages at the same block size.
"""

from tuhqkd.rates import (ROUNDINGS, SamplingQuery, TuhQuery, min_blocksize, sampling_optimize,
                          sampling_upper_bound, tuh_report)

N, DELTA = 3100, 0.0451

print(f"hashing protocol, n={N}, delta={DELTA}, epsilon=1e-80")
for rounding in ROUNDINGS:
    rep = tuh_report(TuhQuery(N, DELTA, 1e-80, rounding))
    print(f"  {rounding:12s} r={rep.r!s:>4}  k={rep.k}  output={rep.output_size}  "
          f"security={rep.security_achieved:.2e}")

print("\nsmallest block with 6 output bits at epsilon=1e-6")
for rounding in ROUNDINGS:
    print(f"  {rounding:12s} n={min_blocksize(DELTA, 1e-6, 6, rounding)}")

rep = sampling_optimize(SamplingQuery(N, DELTA, 1e-6))
bound = sampling_upper_bound(N, DELTA, 1e-6)
print(f"\nsampling protocol, n={N}, eps_qkd=1e-6")
print(f"  output={rep.n_out} bits (rate {rep.rate:.4f}, upper bound {bound.bound_rate:.4f})")
print(f"  witness: n_pe={rep.n_pe} nu={rep.nu:.4f} xi={rep.xi:.4f}")
print(f"  budget: ec={rep.eps_ec:.2e} pa={rep.eps_pa:.2e} pe={rep.eps_pe:.2e} total={rep.eps_achieved:.2e}")
hashing = tuh_report(TuhQuery(N, DELTA, 1e-6, "rate_direct"))
print(f"  hashing at the same epsilon: {hashing.output_size} bits")
