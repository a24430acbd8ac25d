"""Finite-key rates: hashing-based protocol versus a sampling-based one.

The hashing protocol spends 2k bits of an n-bit block, with k the smallest
integer above ``n h(r/n) + 2 log2(1/eps) + 5``; its security then works
out to ``2**(-k/2 + n h(r/n)/2 + 5/2)``.

The sampling protocol first tests ``n_pe`` positions and then reconciles
and compresses the remaining ``n_rk``; its epsilon budget is
``eps_ec + eps_pa + eps_pe`` and :func:`sampling_optimize` maximises the
output length under a target budget.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .hashball import binary_entropy

__all__ = [
    "ROUNDINGS",
    "InfeasibleError",
    "TuhQuery",
    "TuhReport",
    "SamplingQuery",
    "SamplingReport",
    "BoundReport",
    "tuh_report",
    "min_blocksize",
    "eps_pe",
    "sampling_epsilons",
    "sampling_output_bound",
    "sampling_optimize",
    "sampling_upper_bound",
    "compare_curves",
    "rows_to_csv",
    "rows_to_json",
    "golden_section",
    "CSV_COLUMNS",
]

ROUNDINGS = ("floor_r", "ceil_r", "rate_direct")
CSV_COLUMNS = ("n", "delta", "epsilon", "tuh_k", "tuh_out", "tuh_rate",
               "samp_out", "samp_rate", "bound_rate")
LOG2_3 = math.log2(3.0)


class InfeasibleError(ValueError):
    """No block size or parameter choice can meet the request."""


def _log2_inv(eps: float) -> float:
    return -math.log2(eps)


# --- two-universal hashing ---------------------------------------------------

@dataclass(frozen=True)
class TuhQuery:
    n: int
    delta: float
    epsilon: float
    rounding: str = "floor_r"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0.0 <= self.delta < 0.5:
            raise ValueError(f"delta must lie in [0, 1/2), got {self.delta}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.rounding not in ROUNDINGS:
            raise ValueError(f"rounding must be one of {ROUNDINGS}, got {self.rounding!r}")


@dataclass(frozen=True)
class TuhReport:
    n: int
    delta: float
    epsilon: float
    rounding: str
    r: Optional[int]
    entropy: float
    k: int
    output_size: int
    rate: float
    security_achieved: float
    deviation: float
    feasible: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _radius(n: int, delta: float, rounding: str) -> Optional[int]:
    if rounding == "floor_r":
        return math.floor(delta * n)
    if rounding == "ceil_r":
        return math.ceil(delta * n)
    return None


def tuh_report(q: TuhQuery) -> TuhReport:
    r = _radius(q.n, q.delta, q.rounding)
    frac = q.delta if r is None else r / q.n
    if frac > 1.0:
        frac = 1.0
    hr = binary_entropy(frac)
    k = math.ceil(q.n * hr + 2.0 * _log2_inv(q.epsilon) + 5.0)
    out = q.n - 2 * k
    rate = out / q.n
    security = 2.0 ** (-k / 2 + q.n * hr / 2 + 2.5)
    deviation = (1.0 - 2.0 * binary_entropy(q.delta)) - rate
    return TuhReport(q.n, q.delta, q.epsilon, q.rounding, r, hr, k, out, rate, security,
                     deviation, out > 0)


def _outputs(ns: np.ndarray, delta: float, epsilon: float, rounding: str) -> np.ndarray:
    """Vectorised output sizes n - 2k for an array of block sizes."""
    if rounding == "floor_r":
        frac = np.floor(delta * ns) / ns
    elif rounding == "ceil_r":
        frac = np.minimum(np.ceil(delta * ns) / ns, 1.0)
    else:
        frac = np.full(ns.shape, delta)
    k = np.ceil(ns * binary_entropy(frac) + 2.0 * _log2_inv(epsilon) + 5.0)
    return ns - 2 * k.astype(np.int64)


def min_blocksize(delta: float, epsilon: float, target_bits: int, rounding: str = "floor_r",
                  chunk: int = 4096) -> int:
    """Smallest n whose output is at least ``target_bits``.

    Output is not monotone in n under the integer roundings, so this scans
    every n upward from the first size that could possibly work.
    """
    if target_bits < 1:
        raise ValueError(f"target_bits must be >= 1, got {target_bits}")
    TuhQuery(1, delta, epsilon, rounding)  # validates the arguments
    asym = 1.0 - 2.0 * binary_entropy(delta)
    if asym <= 0.0:
        raise InfeasibleError(f"1 - 2h(delta) = {asym:.6g} <= 0: no block size gives a positive key")
    lead = 4.0 * _log2_inv(epsilon)
    start = max(1, math.floor(target_bits + lead + 10))
    # beyond this size even the rate_direct worst case clears the target
    cap = math.ceil((target_bits + lead + 12) / asym) + 10
    if rounding == "ceil_r":
        cap = 4 * cap + 10_000
    n = start
    while n <= cap:
        ns = np.arange(n, min(n + chunk, cap + 1), dtype=np.int64)
        hits = np.flatnonzero(_outputs(ns, delta, epsilon, rounding) >= target_bits)
        if hits.size:
            return int(ns[hits[0]])
        n += chunk
    raise InfeasibleError(f"no block size up to {cap} reaches {target_bits} bits")


# --- random sampling protocol -----------------------------------------------

def eps_pe(n, n_pe, delta, nu, xi):
    """Sampling tail bound: 2 sqrt(exp(-2 n n_pe xi^2/(n_rk+1)) + exp(-2(n+2)(n_rk^2(nu-xi)^2-1)/D))."""
    n_rk = n - n_pe
    a = -2.0 * n * n_pe * xi**2 / (n_rk + 1.0)
    num = -2.0 * (n + 2.0) * (n_rk**2 * (nu - xi) ** 2 - 1.0)
    den = (n * (delta + xi) + 1.0) * (n * (1.0 - delta - xi) + 1.0)
    return 2.0 * np.sqrt(np.exp(a) + np.exp(num / den))


def _check_domain(n, n_pe, delta, nu, xi):
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if not 0.0 < xi < nu < 0.5 - delta:
        raise ValueError(f"need 0 < xi < nu < 1/2 - delta, got xi={xi}, nu={nu}, delta={delta}")
    if not 1 <= n_pe < n:
        raise ValueError(f"need 1 <= n_pe < n, got n_pe={n_pe}, n={n}")


def sampling_epsilons(n: int, n_pe: int, delta: float, nu: float, xi: float, eps_ec: float,
                      n_out: float) -> Tuple[float, float, float]:
    """(eps_pa, eps_pe, eps_qkd) for one parameter choice, evaluated as written."""
    _check_domain(n, n_pe, delta, nu, xi)
    if eps_ec <= 0:
        raise ValueError(f"eps_ec must be positive, got {eps_ec}")
    n_rk = n - n_pe
    gap = 1.0 - binary_entropy(delta + nu) - binary_entropy(delta)
    e_pa = 2.0 ** ((-n_rk * gap + n_out) / 2.0) / (2.0 * math.sqrt(eps_ec))
    e_pe = float(eps_pe(n, n_pe, delta, nu, xi))
    return e_pa, e_pe, eps_ec + e_pa + e_pe


def stationary_eps_ec(n_rk: int, delta: float, nu: float, n_out: float) -> float:
    """The eps_ec minimising eps_ec + eps_pa: 2^(-4/3) 2^((-n_rk gap + n_out)/3)."""
    gap = 1.0 - binary_entropy(delta + nu) - binary_entropy(delta)
    return 2.0 ** (-4.0 / 3.0) * 2.0 ** ((-n_rk * gap + n_out) / 3.0)


def sampling_output_bound(n, n_pe, delta, nu, e_pe, eps_qkd):
    """Largest real n_out meeting the budget with eps_ec at its stationary point.

    At the stationary point eps_ec + eps_pa = 3 eps_ec, so the budget
    3 eps_ec + eps_pe <= eps_qkd rearranges to
    n_out <= n_rk (1 - h(delta+nu) - h(delta)) + 3 log2(eps_qkd - eps_pe) + 4 - 3 log2 3.
    Returns -inf where eps_pe alone exhausts the budget.
    """
    n_rk = n - n_pe
    gap = 1.0 - binary_entropy(np.minimum(delta + nu, 1.0)) - binary_entropy(delta)
    slack = eps_qkd - e_pe
    with np.errstate(divide="ignore", invalid="ignore"):
        val = n_rk * gap + 3.0 * np.log2(np.where(slack > 0, slack, 1.0)) + 4.0 - 3.0 * LOG2_3
    return np.where(slack > 0, val, -np.inf)


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
                   max_iter: int = 200) -> Tuple[float, float]:
    """Minimise a unimodal ``f`` on [lo, hi]; returns (argmin, min)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    fx = f(x)
    best = min((fx, x), (fc, c), (fd, d))
    return best[1], best[0]


@dataclass(frozen=True)
class SamplingQuery:
    n: int
    delta: float
    eps_qkd: float
    nu_points: int = 200
    xi_points: int = 64
    npe_points: int = 80

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 1/2), got {self.delta}")
        if not 0.0 < self.eps_qkd < 1.0:
            raise ValueError(f"eps_qkd must lie in (0, 1), got {self.eps_qkd}")
        if min(self.nu_points, self.xi_points, self.npe_points) < 4:
            raise ValueError("search grids need at least 4 points")


@dataclass(frozen=True)
class SamplingReport:
    n: int
    delta: float
    eps_qkd: float
    n_out: int
    feasible: bool
    rate: float
    nu: float
    xi: float
    n_pe: int
    n_rk: int
    eps_ec: float
    eps_pa: float
    eps_pe: float
    eps_achieved: float
    leakage: float
    objective: float

    def to_dict(self) -> dict:
        return asdict(self)


class _Search:
    """Best achievable output for fixed (n, delta, eps_qkd) as a function of n_pe and nu."""

    def __init__(self, q: SamplingQuery):
        self.q = q
        self.n = q.n
        self.delta = q.delta
        self.eps = q.eps_qkd
        self.nu_max = 0.5 - q.delta
        lo = min(1e-7, self.nu_max * 1e-3)
        self.nu_grid = np.geomspace(lo, self.nu_max * (1.0 - 1e-9), q.nu_points)
        self.ratios = np.linspace(0.0, 1.0, q.xi_points + 2)[1:-1]
        self._cache = {}

    def xi_best(self, n_pe: int, nu: float) -> Tuple[float, float]:
        """(xi, eps_pe) with xi minimising eps_pe(nu, xi): ratio grid then golden section."""
        vals = eps_pe(self.n, n_pe, self.delta, nu, nu * self.ratios)
        i = int(np.argmin(vals))
        lo = self.ratios[i - 1] if i > 0 else self.ratios[0] * 1e-3
        hi = self.ratios[i + 1] if i + 1 < len(self.ratios) else 1.0 - 1e-12
        c, v = golden_section(lambda c: float(eps_pe(self.n, n_pe, self.delta, nu, nu * c)), lo, hi)
        if vals[i] < v:
            c, v = float(self.ratios[i]), float(vals[i])
        return nu * c, v

    def objective(self, n_pe: int, nu: float) -> Tuple[float, float, float]:
        xi, e = self.xi_best(n_pe, nu)
        return float(sampling_output_bound(self.n, n_pe, self.delta, nu, e, self.eps)), xi, e

    def best_for_npe(self, n_pe: int) -> Tuple[float, float, float, float]:
        """(F, nu, xi, eps_pe) maximising over nu for this n_pe."""
        if n_pe in self._cache:
            return self._cache[n_pe]
        nus = self.nu_grid[:, None]
        vals = eps_pe(self.n, n_pe, self.delta, nus, nus * self.ratios[None, :]).min(axis=1)
        F = sampling_output_bound(self.n, n_pe, self.delta, self.nu_grid, vals, self.eps)
        i = int(np.argmax(F))
        if not np.isfinite(F[i]):
            res = (-math.inf, float(self.nu_grid[i]), float(self.nu_grid[i]) / 2, math.inf)
            self._cache[n_pe] = res
            return res
        lo = self.nu_grid[max(i - 1, 0)]
        hi = self.nu_grid[min(i + 1, len(self.nu_grid) - 1)]
        nu, negF = golden_section(lambda v: -self.objective(n_pe, v)[0], lo, hi)
        F_ref, xi, e = self.objective(n_pe, nu)
        F_grid, xi_g, e_g = self.objective(n_pe, float(self.nu_grid[i]))
        res = (F_ref, nu, xi, e) if F_ref >= F_grid else (F_grid, float(self.nu_grid[i]), xi_g, e_g)
        self._cache[n_pe] = res
        return res

    def F(self, n_pe: int) -> float:
        return self.best_for_npe(n_pe)[0]


def _argmax_int(f: Callable[[int], float], lo: int, hi: int) -> int:
    """Integer ternary search for a unimodal f on [lo, hi]; smallest maximiser on ties."""
    while hi - lo > 4:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if f(m1) < f(m2):
            lo = m1 + 1
        else:
            hi = m2
    best = lo
    for x in range(lo, hi + 1):
        if f(x) > f(best):
            best = x
    return best


def _first_reaching(f: Callable[[float], float], lo, hi, target: float, integer: bool, iters: int = 60):
    """Smallest x in [lo, hi] with f(x) >= target, given f increasing there and f(hi) >= target."""
    if f(lo) >= target:
        return lo
    for _ in range(iters):
        if integer and hi - lo <= 1:
            break
        mid = (lo + hi) // 2 if integer else (lo + hi) / 2.0
        if f(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def sampling_optimize(q: SamplingQuery) -> SamplingReport:
    """Largest integer n_out meeting the budget, with its witness parameters.

    Search: geometric grid over n_pe, integer ternary refinement, and for
    each n_pe a geometric nu grid with golden-section refinement; xi is
    chosen per nu to minimise eps_pe, and eps_ec sits at its closed-form
    optimum.  Among witnesses reaching the best n_out the smallest n_pe,
    then the smallest nu, is reported.
    """
    s = _Search(q)
    n = q.n
    grid = np.unique(np.geomspace(1, n - 1, q.npe_points).astype(np.int64))
    Fs = [s.F(int(p)) for p in grid]
    j = int(np.argmax(Fs))
    lo = int(grid[max(j - 1, 0)])
    hi = int(grid[min(j + 1, len(grid) - 1)])
    best_pe = _argmax_int(s.F, lo, hi)
    F_best = s.F(best_pe)
    if F_best < 1.0:
        # nothing positive fits the budget; report the best witness anyway
        F_, nu, xi, e = s.best_for_npe(best_pe)
        return _report(q, 0, False, best_pe, nu, xi, F_)
    n_out = math.floor(F_best)
    # tie-break: smallest n_pe reaching n_out, then smallest nu
    n_pe = _first_reaching(s.F, 1, best_pe, n_out, integer=True)
    F_pe, nu_best, _, _ = s.best_for_npe(n_pe)
    nu = _first_reaching(lambda v: s.objective(n_pe, v)[0], float(s.nu_grid[0]), nu_best,
                         n_out, integer=False)
    F_at, xi, _ = s.objective(n_pe, nu)
    return _report(q, n_out, True, n_pe, nu, xi, F_at)


def _report(q: SamplingQuery, n_out: int, feasible: bool, n_pe: int, nu: float, xi: float,
            objective: float) -> SamplingReport:
    n_rk = q.n - n_pe
    e_ec = stationary_eps_ec(n_rk, q.delta, nu, n_out)
    e_pa, e_pe, total = sampling_epsilons(q.n, n_pe, q.delta, nu, xi, e_ec, n_out)
    leakage = n_rk * binary_entropy(q.delta) - math.log2(e_ec)
    return SamplingReport(q.n, q.delta, q.eps_qkd, n_out, feasible, n_out / q.n, nu, xi, n_pe, n_rk,
                          e_ec, e_pa, e_pe, total, leakage, float(objective))


@dataclass(frozen=True)
class BoundReport:
    n: int
    delta: float
    eps_qkd: float
    c1: float
    c2: float
    bound_rate: float

    def to_dict(self) -> dict:
        return asdict(self)


def sampling_upper_bound(n: int, delta: float, eps_qkd: float) -> BoundReport:
    """Upper bound on n_out/n for any parameter choice of the sampling protocol."""
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if not 0.0 < eps_qkd <= 1.0:
        raise ValueError(f"eps_qkd must lie in (0, 1], got {eps_qkd}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    h = binary_entropy(delta)
    asym = 1.0 - 2.0 * h
    if asym <= 0:
        raise InfeasibleError(f"1 - 2h(delta) = {asym:.6g} <= 0")
    c1 = (3.0 / 2.0 ** (5.0 / 3.0) * asym ** (1.0 / 3.0)
          * ((1.0 - h) / (0.5 - delta)) ** (2.0 / 3.0) * math.log(2.0 / eps_qkd) ** (1.0 / 3.0))
    c2 = 3.0 * _log2_inv(eps_qkd) + 3.0 * LOG2_3 - 4.0
    bound = max(asym / 2.0, asym - c1 * n ** (-1.0 / 3.0) - c2 / n)
    return BoundReport(n, delta, eps_qkd, c1, c2, bound)


# --- comparison tables -------------------------------------------------------

def compare_curves(delta: float, epsilon: float, ns: Iterable[int],
                   rounding: str = "rate_direct", query_opts: Optional[dict] = None) -> List[dict]:
    """One row per n comparing the hashing rate, the optimised sampling rate and its upper bound.

    Raises ``AssertionError`` if a feasible hashing row falls outside
    (4 log2(1/eps) + 10)/n <= deviation <= (4 log2(1/eps) + 12)/n, which
    holds exactly for ``rate_direct``.
    """
    ns = [int(n) for n in ns]
    if not ns:
        raise ValueError("the n grid is empty")
    lead = 4.0 * _log2_inv(epsilon)
    rows = []
    for n in ns:
        t = tuh_report(TuhQuery(n, delta, epsilon, rounding))
        sr = sampling_optimize(SamplingQuery(n, delta, epsilon, **(query_opts or {})))
        b = sampling_upper_bound(n, delta, epsilon)
        if t.feasible and rounding == "rate_direct":
            dn = t.deviation * n
            if not (lead + 10 - 1e-9 * n <= dn <= lead + 12 + 1e-9 * n):
                raise AssertionError(f"deviation sandwich violated at n={n}: {dn}")
        rows.append({
            "n": n, "delta": delta, "epsilon": epsilon,
            "tuh_k": t.k, "tuh_out": t.output_size, "tuh_rate": t.rate,
            "samp_out": sr.n_out, "samp_rate": sr.rate, "bound_rate": b.bound_rate,
        })
    return rows


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def rows_to_json(rows: Sequence[dict]) -> str:
    return json.dumps(list(rows), indent=2)
