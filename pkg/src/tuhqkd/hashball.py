"""Binary entropy, Hamming balls, and the two ball membership decoders.

``f_ball`` is exact membership.  ``g_ball`` only sees a hash ``H @ alpha``
and returns the first ball element, in :func:`ball_iter` order, with that
hash.  A decode result is a :class:`BitVector` or ``None`` for "no pattern".
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Optional

import numpy as np

from . import _kernels as K
from .f2core import BitMatrix, BitVector, DimensionError

__all__ = [
    "BallSpec",
    "BallTooLarge",
    "DecodeResult",
    "binary_entropy",
    "ball_size",
    "ball_iter",
    "f_ball",
    "g_ball",
    "syndrome_columns",
    "search_words",
]

DecodeResult = Optional[BitVector]

SCAN_LIMIT = 2**32
DEFAULT_MAX_WORK = float(2**32)
# largest pair/triple lookup table the layered search may build
TABLE_CAP = 2_000_000


class BallTooLarge(RuntimeError):
    """The requested search exceeds the configured work limit."""


@dataclass(frozen=True)
class BallSpec:
    """The Hamming ball of radius ``r`` around the zero string of length ``n``."""

    n: int
    r: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.r < 0 or 2 * self.r > self.n:
            raise ValueError(f"need 0 <= r and 2r <= n, got n={self.n}, r={self.r}")


def binary_entropy(p):
    """h(p) = -p log2 p - (1-p) log2 (1-p), with h(0) = h(1) = 0.

    Works elementwise on arrays; scalars come back as ``float``.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise ValueError(f"entropy argument must lie in [0, 1], got {p}")
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(arr > 0, -arr * np.log2(np.where(arr > 0, arr, 1.0)), 0.0)
        q = 1.0 - arr
        b = np.where(q > 0, -q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
    out = a + b
    return float(out) if out.ndim == 0 else out


def ball_size(spec: BallSpec) -> int:
    return sum(math.comb(spec.n, i) for i in range(spec.r + 1))


def ball_iter(spec: BallSpec) -> Iterator[BitVector]:
    """Every ball element once: by weight, then lexicographically by sorted support.

    Within a weight, supports come in ``itertools.combinations`` order, so
    the first weight-one element is the vector with only bit 0 set.
    """
    for w in range(spec.r + 1):
        for support in combinations(range(spec.n), w):
            yield BitVector.from_support(spec.n, support)


def f_ball(alpha: BitVector, spec: BallSpec) -> DecodeResult:
    if len(alpha) != spec.n:
        raise DimensionError(f"pattern has length {len(alpha)}, ball is over length {spec.n}")
    return alpha if alpha.weight <= spec.r else None


def syndrome_columns(H: BitMatrix) -> np.ndarray:
    """Packed syndromes of the unit vectors, one row per column of H."""
    return K.transpose(H.words, H.rows, H.cols)


def search_words(cols: np.ndarray, y_words: np.ndarray, n: int, r: int,
                 max_work: float = DEFAULT_MAX_WORK):
    """Packed-level layered search; returns the support tuple, or None for no pattern."""
    status, w, support = K.ball_search(cols, y_words, n, r, float(max_work), TABLE_CAP)
    if status == 2:
        raise BallTooLarge(
            f"decoding weight-{w} layer of a radius-{r} ball over {n} bits exceeds work limit {max_work:g}")
    if status == 1:
        return None
    return tuple(int(j) for j in support[:w])


def g_ball(H: BitMatrix, y: BitVector, spec: BallSpec, method: str = "layered",
           max_work: float = DEFAULT_MAX_WORK) -> DecodeResult:
    """First ball element s (in ``ball_iter`` order) with ``H @ s == y``, else None.

    ``method="scan"`` walks the ball element by element and refuses balls
    with more than 2**32 elements.  ``method="layered"`` returns the same
    answer, splitting each weight layer into a prefix walk plus a table of
    pair or triple syndromes, and refuses when the estimated work exceeds
    ``max_work``.
    """
    if H.cols != spec.n:
        raise DimensionError(f"H has {H.cols} columns, ball is over length {spec.n}")
    if len(y) != H.rows:
        raise DimensionError(f"syndrome has length {len(y)}, H has {H.rows} rows")
    if method == "scan":
        size = ball_size(spec)
        if size > SCAN_LIMIT:
            raise BallTooLarge(f"ball has {size} elements, scan limit is {SCAN_LIMIT}")
        for s in ball_iter(spec):
            if H @ s == y:
                return s
        return None
    if method != "layered":
        raise ValueError(f"unknown decode method {method!r}")
    support = search_words(syndrome_columns(H), y.words, spec.n, spec.r, max_work)
    if support is None:
        return None
    return BitVector.from_support(spec.n, support)
