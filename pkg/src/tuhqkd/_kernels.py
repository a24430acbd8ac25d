"""Numba kernels over bit-packed GF(2) rows.

Rows are stored as ``uint64`` words, little-endian within a row: bit ``j``
lives in word ``j >> 6`` at position ``j & 63``.  Every kernel here is pure
with respect to its inputs unless the name says ``inplace``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_ONE = np.uint64(1)
_ZERO = np.uint64(0)


@nb.njit(cache=True, inline="always")
def _bit(row, j):
    return (row[j >> 6] >> np.uint64(j & 63)) & np.uint64(1)


@nb.njit(cache=True, inline="always")
def _parity(x):
    x ^= x >> np.uint64(32)
    x ^= x >> np.uint64(16)
    x ^= x >> np.uint64(8)
    x ^= x >> np.uint64(4)
    x ^= x >> np.uint64(2)
    x ^= x >> np.uint64(1)
    return x & np.uint64(1)


_DEBRUIJN = np.uint64(0x03F79D71B4CB0A89)
_DEBRUIJN_TABLE = np.zeros(64, np.int64)
for _i in range(64):
    _DEBRUIJN_TABLE[((1 << _i) * 0x03F79D71B4CB0A89 & 0xFFFFFFFFFFFFFFFF) >> 58] = _i


@nb.njit(cache=True, inline="always")
def _lowest_bit(x):
    # x must be nonzero; isolate the lowest set bit and hash it
    low = x & (~x + _ONE)
    return _DEBRUIJN_TABLE[(low * _DEBRUIJN) >> np.uint64(58)]


@nb.njit(cache=True)
def gauss_jordan_inplace(A, B, ncols):
    """Reduce ``A`` to reduced row echelon form, mirroring row ops on ``B``.

    Pivot search scans columns left to right and takes the first row (in
    current order) with a set bit.  Returns ``(rank, pivot_columns)``.
    """
    m = A.shape[0]
    WA = A.shape[1]
    WB = B.shape[1]
    pivots = np.empty(min(m, ncols), np.int64)
    rank = 0
    for c in range(ncols):
        if rank == m:
            break
        cw = c >> 6
        cb = np.uint64(c & 63)
        p = -1
        for i in range(rank, m):
            if (A[i, cw] >> cb) & _ONE:
                p = i
                break
        if p < 0:
            continue
        if p != rank:
            for w in range(WA):
                tmp = A[p, w]
                A[p, w] = A[rank, w]
                A[rank, w] = tmp
            for w in range(WB):
                tmp = B[p, w]
                B[p, w] = B[rank, w]
                B[rank, w] = tmp
        for i in range(m):
            if i != rank and (A[i, cw] >> cb) & _ONE:
                for w in range(WA):
                    A[i, w] ^= A[rank, w]
                for w in range(WB):
                    B[i, w] ^= B[rank, w]
        pivots[rank] = c
        rank += 1
    return rank, pivots[:rank].copy()


@nb.njit(cache=True)
def matmul(A, B, inner):
    """GF(2) product: row i of the result is the XOR of rows j of B with A[i, j] = 1."""
    m = A.shape[0]
    WB = B.shape[1]
    C = np.zeros((m, WB), np.uint64)
    for i in range(m):
        for j in range(inner):
            mask = _ZERO - ((A[i, j >> 6] >> np.uint64(j & 63)) & _ONE)
            for w in range(WB):
                C[i, w] ^= B[j, w] & mask
    return C


@nb.njit(cache=True)
def matvec(A, x):
    """Packed vector of parities <A_i, x> for every row i."""
    m = A.shape[0]
    W = A.shape[1]
    out = np.zeros((m + 63) >> 6, np.uint64)
    for i in range(m):
        acc = _ZERO
        for w in range(W):
            acc ^= A[i, w] & x[w]
        out[i >> 6] |= _parity(acc) << np.uint64(i & 63)
    return out


@nb.njit(cache=True)
def transpose(A, rows, cols):
    """Transpose a packed ``rows x cols`` matrix into a packed ``cols x rows`` one."""
    T = np.zeros((cols, (rows + 63) >> 6), np.uint64)
    for i in range(rows):
        iw = i >> 6
        ib = np.uint64(i & 63)
        for j in range(cols):
            T[j, iw] |= ((A[i, j >> 6] >> np.uint64(j & 63)) & _ONE) << ib
    return T


@nb.njit(cache=True)
def sample_full_rank_rows(cand, m, ncols):
    """Consume candidate rows in order, keeping those outside the span of the earlier ones.

    Each accepted row is uniform over the complement of the span of the
    earlier rows, so the first ``m`` accepted rows are uniform over full rank
    ``m x ncols`` matrices.

    The first ``m`` candidates go through one forward elimination that always
    pivots on the lowest-index remaining row; its pivot rows are exactly the
    candidates independent of their predecessors.  Any shortfall is made up
    one candidate at a time.

    Returns ``(rows, rref, pivots, used)``: accepted rows in order, the
    reduced echelon form of their span (rows sorted by pivot), the pivot
    columns, and the number of candidates consumed (-1 if they ran out).
    """
    W = cand.shape[1]
    t = min(m, cand.shape[0])
    # word-major copy, E[q, i] is word q of candidate i, so row updates run
    # as long masked passes over i
    E = np.empty((W, t), np.uint64)
    for i in range(t):
        for q in range(W):
            E[q, i] = cand[i, q]
    live = np.full(t, _ZERO - _ONE, np.uint64)
    mask = np.zeros(t, np.uint64)
    pivcol = np.full(t, -1, np.int64)
    npiv = 0
    lo = 0
    for c in range(ncols):
        if npiv == t:
            break
        cw = c >> 6
        cb = np.uint64(c & 63)
        col = E[cw]
        while lo < t and live[lo] == _ZERO:
            lo += 1
        p = -1
        for i in range(lo, t):
            if live[i] != _ZERO and (col[i] >> cb) & _ONE:
                p = i
                break
        if p < 0:
            continue
        live[p] = _ZERO
        pivcol[p] = c
        npiv += 1
        for i in range(p + 1, t):
            mask[i] = (_ZERO - ((col[i] >> cb) & _ONE)) & live[i]
        for q in range(cw, W):
            row = E[q]
            v = row[p]
            for i in range(p + 1, t):
                row[i] ^= v & mask[i]

    ech = np.zeros((m, W), np.uint64)
    rows = np.zeros((m, W), np.uint64)
    piv = np.empty(m, np.int64)
    owner = np.full(ncols, -1, np.int64)
    cnt = 0
    for i in range(t):
        if pivcol[i] >= 0:
            for q in range(W):
                ech[cnt, q] = E[q, i]
                rows[cnt, q] = cand[i, q]
            piv[cnt] = pivcol[i]
            owner[pivcol[i]] = cnt
            cnt += 1
    used = t
    red = np.empty(W, np.uint64)
    while cnt < m:
        if used >= cand.shape[0]:
            return rows, ech, piv, -1
        for q in range(W):
            red[q] = cand[used, q]
        used += 1
        p = -1
        w = 0
        while w < W:
            x = red[w]
            if x == _ZERO:
                w += 1
                continue
            c = w * 64 + _lowest_bit(x)
            o = owner[c]
            if o < 0:
                p = c
                break
            for q in range(w, W):
                red[q] ^= ech[o, q]
        if p < 0:
            continue
        for q in range(W):
            ech[cnt, q] = red[q]
            rows[cnt, q] = cand[used - 1, q]
        owner[p] = cnt
        piv[cnt] = p
        cnt += 1

    order = np.argsort(piv)
    P = piv[order]
    RT = np.empty((W, m), np.uint64)
    for i in range(m):
        for q in range(W):
            RT[q, i] = ech[order[i], q]
    bmask = np.empty(m, np.uint64)
    # back substitution; only rows with smaller pivots can hold bit P[j]
    for j in range(m - 1, -1, -1):
        pw = P[j] >> 6
        pb = np.uint64(P[j] & 63)
        col = RT[pw]
        for i in range(j):
            bmask[i] = _ZERO - ((col[i] >> pb) & _ONE)
        for q in range(pw, W):
            row = RT[q]
            v = row[j]
            for i in range(j):
                row[i] ^= v & bmask[i]
    return rows, RT.T.copy(), P, used


@nb.njit(cache=True)
def annihilator_basis(rref, pivots, ncols):
    """Basis (one row per free column, ascending) of {x : R x = 0} for an RREF R."""
    m = rref.shape[0]
    W = (ncols + 63) >> 6
    free_index = np.zeros(ncols, np.int64)
    for i in range(m):
        free_index[pivots[i]] = -1
    nfree = 0
    for c in range(ncols):
        if free_index[c] == 0:
            free_index[c] = nfree
            nfree += 1
        else:
            free_index[c] = -1
    B = np.zeros((nfree, W), np.uint64)
    for c in range(ncols):
        f = free_index[c]
        if f >= 0:
            B[f, c >> 6] |= _ONE << np.uint64(c & 63)
    for i in range(m):
        p = pivots[i]
        pbit = _ONE << np.uint64(p & 63)
        for w in range(W):
            x = rref[i, w]
            while x != _ZERO:
                c = w * 64 + _lowest_bit(x)
                x &= x - _ONE
                f = free_index[c]
                if f >= 0:
                    B[f, p >> 6] |= pbit
    return B


# ---------------------------------------------------------------------------
# Hamming-ball syndrome search
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _n_choose(n, k):
    if k < 0 or k > n:
        return 0.0
    out = 1.0
    for i in range(k):
        out = out * (n - i) / (i + 1)
    return out


@nb.njit(cache=True)
def _build_table(cols, n, t):
    """All t-subsets of range(n) in lex order with their syndromes, sorted by first word."""
    Wk = cols.shape[1]
    size = int(_n_choose(n, t) + 0.5)
    syn = np.zeros((size, Wk), np.uint64)
    idx = np.empty((size, t), np.int32)
    comb = np.arange(t)
    e = 0
    while True:
        for w in range(Wk):
            acc = _ZERO
            for d in range(t):
                acc ^= cols[comb[d], w]
            syn[e, w] = acc
        for d in range(t):
            idx[e, d] = comb[d]
        e += 1
        d = t - 1
        while d >= 0 and comb[d] == n - t + d:
            d -= 1
        if d < 0:
            break
        comb[d] += 1
        for q in range(d + 1, t):
            comb[q] = comb[q - 1] + 1
    order = np.argsort(syn[:, 0], kind="mergesort")
    keys = syn[order, 0].copy()
    return keys, order, syn, idx


@nb.njit(cache=True)
def _table_lookup(keys, order, syn, idx, target, min_first):
    """Lex-smallest table entry with syndrome == target and first index > min_first."""
    Wk = syn.shape[1]
    pos = np.searchsorted(keys, target[0])
    while pos < keys.shape[0] and keys[pos] == target[0]:
        e = order[pos]
        if idx[e, 0] > min_first:
            ok = True
            for w in range(1, Wk):
                if syn[e, w] != target[w]:
                    ok = False
                    break
            if ok:
                return e
        pos += 1
    return -1


@nb.njit(cache=True)
def _scan_layer_small(cols, y, n, w, out):
    """Direct lex-order scan for weights 0, 1, 2."""
    Wk = cols.shape[1]
    if w == 0:
        for q in range(Wk):
            if y[q] != _ZERO:
                return False
        return True
    if w == 1:
        for i in range(n):
            ok = True
            for q in range(Wk):
                if cols[i, q] != y[q]:
                    ok = False
                    break
            if ok:
                out[0] = i
                return True
        return False
    for i in range(n):
        for j in range(i + 1, n):
            ok = True
            for q in range(Wk):
                if cols[i, q] ^ cols[j, q] != y[q]:
                    ok = False
                    break
            if ok:
                out[0] = i
                out[1] = j
                return True
    return False


@nb.njit(cache=True)
def _scan_layer_mitm(cols, y, n, w, t, keys, order, syn, idx, out):
    """Lex-first weight-w solution: enumerate (w-t)-prefixes in lex order, look up t-suffixes."""
    Wk = cols.shape[1]
    p = w - t
    target = np.empty(Wk, np.uint64)
    if p == 0:
        for q in range(Wk):
            target[q] = y[q]
        e = _table_lookup(keys, order, syn, idx, target, -1)
        if e < 0:
            return False
        for d in range(t):
            out[d] = idx[e, d]
        return True
    comb = np.arange(p)
    acc = np.zeros((p + 1, Wk), np.uint64)
    for q in range(Wk):
        acc[0, q] = y[q]
    for d in range(p):
        for q in range(Wk):
            acc[d + 1, q] = acc[d, q] ^ cols[comb[d], q]
    hi = n - t  # prefixes live in range(n - t) so a suffix still fits
    while True:
        e = _table_lookup(keys, order, syn, idx, acc[p], comb[p - 1])
        if e >= 0:
            for d in range(p):
                out[d] = comb[d]
            for d in range(t):
                out[p + d] = idx[e, d]
            return True
        d = p - 1
        while d >= 0 and comb[d] == hi - p + d:
            d -= 1
        if d < 0:
            return False
        comb[d] += 1
        for q in range(d + 1, p):
            comb[q] = comb[q - 1] + 1
        for dd in range(d, p):
            for q in range(Wk):
                acc[dd + 1, q] = acc[dd, q] ^ cols[comb[dd], q]


@nb.njit(cache=True)
def ball_search(cols, y, n, r, max_work, table_cap):
    """First vector of the radius-r Hamming ball (weight, then lex order of support) with syndrome y.

    ``cols[j]`` is the packed syndrome of the j-th unit vector.  Returns
    ``(status, weight, support)``: status 0 found, 1 no solution in the ball,
    2 the remaining search would exceed ``max_work`` elementary steps.
    """
    out = np.full(max(r, 1), -1, np.int64)
    work = 0.0
    have2 = False
    have3 = False
    keys2 = np.empty(0, np.uint64)
    order2 = np.empty(0, np.int64)
    syn2 = np.empty((0, cols.shape[1]), np.uint64)
    idx2 = np.empty((0, 2), np.int32)
    keys3 = np.empty(0, np.uint64)
    order3 = np.empty(0, np.int64)
    syn3 = np.empty((0, cols.shape[1]), np.uint64)
    idx3 = np.empty((0, 3), np.int32)
    for w in range(r + 1):
        if w > n:
            break
        if w <= 2:
            work += _n_choose(n, w)
            if work > max_work:
                return 2, w, out
            if _scan_layer_small(cols, y, n, w, out):
                return 0, w, out
            continue
        c2 = _n_choose(n, 2)
        c3 = _n_choose(n, 3)
        # cost of each split: table build (if new) + prefixes * lookup
        cost2 = (0.0 if have2 else c2 * 20.0) + _n_choose(n - 2, w - 2) * 20.0
        cost3 = 1e300
        if w >= 4 and c3 <= table_cap:
            cost3 = (0.0 if have3 else c3 * 24.0) + _n_choose(n - 3, w - 3) * 24.0
        if c2 > table_cap:
            cost2 = 1e300
        if cost2 >= 1e300 and cost3 >= 1e300:
            return 2, w, out
        use3 = cost3 < cost2
        work += cost3 if use3 else cost2
        if work > max_work:
            return 2, w, out
        if use3:
            if not have3:
                keys3, order3, syn3, idx3 = _build_table(cols, n, 3)
                have3 = True
            found = _scan_layer_mitm(cols, y, n, w, 3, keys3, order3, syn3, idx3, out)
        else:
            if not have2:
                keys2, order2, syn2, idx2 = _build_table(cols, n, 2)
                have2 = True
            found = _scan_layer_mitm(cols, y, n, w, 2, keys2, order2, syn2, idx2, out)
        if found:
            return 0, w, out
    return 1, -1, out


@nb.njit(cache=True)
def _decode_rows(H, k, x, n, r, max_work, table_cap):
    """ball_search on the syndrome H x; the column transpose is skipped for a zero syndrome."""
    y = matvec(H, x)
    zero = True
    for w in range(y.shape[0]):
        if y[w] != _ZERO:
            zero = False
    if zero:
        return 0, 0, np.full(max(r, 1), -1, np.int64)
    return ball_search(transpose(H, k, n), y, n, r, max_work, table_cap)


@nb.njit(cache=True)
def trial_decode(H1, tail, k, alpha, beta, n, r, max_work, table_cap):
    """Decode one run given bit/phase patterns.

    ``H1`` is any matrix with the row space of L1 (decoding only depends on
    that), ``tail`` is [M2; M3].  Returns ``(s_status, t_status, mismatch,
    s_support, s_weight, t_support, t_weight)`` with statuses as in
    :func:`ball_search`; ``mismatch`` is 1 when both decode and M3 (beta + t) != 0.
    """
    s_status, s_w, s_sup = _decode_rows(H1, k, alpha, n, r, max_work, table_cap)
    t_status, t_w, t_sup = _decode_rows(tail[:k], k, beta, n, r, max_work, table_cap)
    mismatch = 0
    if s_status == 0 and t_status == 0:
        e = beta.copy()
        for d in range(t_w):
            j = t_sup[d]
            e[j >> 6] ^= _ONE << np.uint64(j & 63)
        resid = matvec(tail[k:], e)
        for w in range(resid.shape[0]):
            if resid[w] != _ZERO:
                mismatch = 1
    return s_status, t_status, mismatch, s_sup, s_w, t_sup, t_w
