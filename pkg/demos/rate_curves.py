"""Finite-size gap of both protocols as the block grows.

The hashing protocol's distance from 1 - 2h(delta) shrinks like 1/n while
the sampling protocol's shrinks like n^(-1/3); the last two columns make
that visible.
"""

import sys

from tuhqkd.hashball import binary_entropy
from tuhqkd.rates import compare_curves

DELTA, EPS = 0.0451, 1e-6
grid = [1000, 3100, 10_000, 31_000, 100_000, 310_000, 1_000_000]
asym = 1 - 2 * binary_entropy(DELTA)

rows = compare_curves(DELTA, EPS, grid)
out = sys.stdout
out.write(f"asymptotic rate {asym:.5f}\n")
out.write(f"{'n':>9} {'hash rate':>10} {'samp rate':>10} {'bound':>8} {'hash gap*n':>11} {'samp gap*n^1/3':>15}\n")
for row in rows:
    n = row["n"]
    out.write(f"{n:9d} {row['tuh_rate']:10.5f} {row['samp_rate']:10.5f} {row['bound_rate']:8.5f} "
              f"{(asym - row['tuh_rate']) * n:11.2f} {(asym - row['samp_rate']) * n ** (1 / 3):15.3f}\n")
