# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled kernels: CART tree growth/prediction and exact policy-tree search.

Mirrors ``_ref.py`` operation for operation; node visit order, candidate
enumeration order, tie-breaking, and (for the tree builder and depth-0/1
search) floating-point summation order are identical, so both backends
produce the same results.  The depth-2 search maintains child split values
incrementally (lazy segment trees over split positions), which reorders
float additions; it coincides with the reference exactly whenever score sums
are exactly representable (e.g. integer-valued scores) and to rounding error
otherwise.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef unsigned long long u64
ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64
ctypedef cnp.float64_t f64


# ---------------------------------------------------------------------------
# splitmix64 (must match dtrlearn.rng exactly)
# ---------------------------------------------------------------------------

cdef inline u64 _sm_next(u64* state) noexcept nogil:
    cdef u64 z
    state[0] = state[0] + <u64>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline u64 _derive2(u64 seed, u64 a, u64 b) noexcept nogil:
    # rng.derive_seed(seed, a, b)
    cdef u64 state = seed
    cdef u64 out
    state = state ^ a
    out = _sm_next(&state)
    state = state ^ b
    out = _sm_next(&state)
    return out


cdef u64 TAG_FEATURES = 0xFEA7


# ---------------------------------------------------------------------------
# stable index sort by (key, position); equals np.lexsort((arange, key))
# ---------------------------------------------------------------------------

cdef void _merge_sort(f64* key, i32* idx, i32* tmp, int lo, int hi) noexcept nogil:
    cdef int mid, i, j, k
    if hi - lo <= 1:
        return
    mid = (lo + hi) // 2
    _merge_sort(key, idx, tmp, lo, mid)
    _merge_sort(key, idx, tmp, mid, hi)
    i = lo
    j = mid
    k = lo
    while i < mid and j < hi:
        if key[idx[i]] <= key[idx[j]]:
            tmp[k] = idx[i]
            i += 1
        else:
            tmp[k] = idx[j]
            j += 1
        k += 1
    while i < mid:
        tmp[k] = idx[i]
        i += 1
        k += 1
    while j < hi:
        tmp[k] = idx[j]
        j += 1
        k += 1
    for i in range(lo, hi):
        idx[i] = tmp[i]


cdef inline double _split_threshold(double lo, double hi) noexcept nogil:
    cdef double thr = 0.5 * (lo + hi)
    if not thr > lo:
        thr = hi
    return thr


# ---------------------------------------------------------------------------
# CART tree builder
# ---------------------------------------------------------------------------

def build_tree(double[:, ::1] X, double[:, ::1] Y, long long[::1] sample_idx,
               int max_depth, int min_leaf, int mtry, unsigned long long tree_seed):
    # Per-tree presort: each feature's bootstrap positions are sorted once by
    # (value, position) and the order is maintained through stable partitions
    # at every split.  This reproduces the reference implementation's
    # per-node lexsort exactly (stable partitions preserve relative order)
    # while avoiding repeated sorting.
    cdef u64 seed = tree_seed
    cdef int n_features = X.shape[1]
    cdef int q = Y.shape[1]
    cdef int m0 = sample_idx.shape[0]
    cdef int max_nodes = 2 * m0 + 3

    feature_arr = np.full(max_nodes, -1, dtype=np.int32)
    threshold_arr = np.zeros(max_nodes, dtype=np.float64)
    left_arr = np.full(max_nodes, -1, dtype=np.int32)
    right_arr = np.full(max_nodes, -1, dtype=np.int32)
    value_arr = np.zeros((max_nodes, q), dtype=np.float64)
    cdef i32[::1] feature = feature_arr
    cdef f64[::1] threshold = threshold_arr
    cdef i32[::1] left = left_arr
    cdef i32[::1] right = right_arr
    cdef f64[:, ::1] value = value_arr

    # row ids of the bootstrap sample, and per-sample target rows
    rows_arr = np.asarray(sample_idx, dtype=np.int64)
    cdef i64[::1] rows = rows_arr
    ys_arr = np.empty((m0, q), dtype=np.float64)
    cdef f64[:, ::1] ys = ys_arr
    cdef int i, c
    for i in range(m0):
        for c in range(q):
            ys[i, c] = Y[rows[i], c]

    # plain (bootstrap-order) positions plus one sorted list per feature,
    # all partitioned in place per node; node ranges are shared
    plain_arr = np.empty(m0, dtype=np.int32)
    cdef i32[::1] plain = plain_arr
    sorted_arr = np.empty((n_features, m0), dtype=np.int32)
    cdef i32[:, ::1] sidx = sorted_arr
    keys_arr = np.empty((n_features, m0), dtype=np.float64)
    cdef f64[:, ::1] keys = keys_arr
    tmp_arr = np.empty(m0, dtype=np.int32)
    cdef i32[::1] tmp = tmp_arr
    inleft_arr = np.zeros(m0, dtype=np.uint8)
    cdef unsigned char[::1] inleft = inleft_arr

    cdef int f
    for i in range(m0):
        plain[i] = i
    for f in range(n_features):
        for i in range(m0):
            sidx[f, i] = i
            keys[f, i] = X[rows[i], f]
        _merge_sort(&keys[f, 0], &sidx[f, 0], &tmp[0], 0, m0)

    stack_arr = np.empty((2 * max_nodes, 4), dtype=np.int64)
    cdef i64[:, ::1] stack = stack_arr

    tot_arr = np.empty(q, dtype=np.float64)
    acc_arr = np.empty(q, dtype=np.float64)
    cdef f64[::1] tot = tot_arr
    cdef f64[::1] acc = acc_arr

    subset_arr = np.empty(n_features, dtype=np.int32)
    cdef i32[::1] subset = subset_arr

    cdef int n_nodes = 1
    cdef int sp = 0
    cdef int nid, lo, hi, depth, m, k, fi, j, nl, lid, rid, pos, nxt
    cdef int n_subset, best_k, swap_j
    cdef double best_gain, gain, sl2, sr2, dj, v, vk, vk1
    cdef int best_f
    cdef double best_thr
    cdef u64 fstate

    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m0
    stack[0, 3] = 0
    sp = 1

    while sp > 0:
        sp -= 1
        nid = <int>stack[sp, 0]
        lo = <int>stack[sp, 1]
        hi = <int>stack[sp, 2]
        depth = <int>stack[sp, 3]
        m = hi - lo

        for c in range(q):
            acc[c] = 0.0
        for i in range(lo, hi):
            pos = plain[i]
            for c in range(q):
                acc[c] = acc[c] + ys[pos, c]
        for c in range(q):
            tot[c] = acc[c]
            value[nid, c] = acc[c] / m

        if depth >= max_depth or m < 2 * min_leaf:
            continue

        # per-node feature subset (partial Fisher-Yates, then ascending)
        if mtry >= n_features:
            n_subset = n_features
            for i in range(n_features):
                subset[i] = i
        else:
            n_subset = mtry
            for i in range(n_features):
                subset[i] = i
            fstate = _derive2(seed, <u64>TAG_FEATURES, <u64>nid)
            for i in range(mtry):
                swap_j = i + <int>(_sm_next(&fstate) % <u64>(n_features - i))
                k = subset[i]
                subset[i] = subset[swap_j]
                subset[swap_j] = k
            for i in range(1, mtry):
                k = subset[i]
                j = i - 1
                while j >= 0 and subset[j] > k:
                    subset[j + 1] = subset[j]
                    j -= 1
                subset[j + 1] = k

        best_gain = -INFINITY
        best_f = -1
        best_thr = 0.0
        for fi in range(n_subset):
            f = subset[fi]
            for c in range(q):
                acc[c] = 0.0
            best_k = -1
            gain = -INFINITY
            vk1 = X[rows[sidx[f, lo]], f]
            for k in range(m - 1):
                pos = sidx[f, lo + k]
                nxt = sidx[f, lo + k + 1]
                for c in range(q):
                    acc[c] = acc[c] + ys[pos, c]
                j = k + 1
                vk = vk1
                vk1 = X[rows[nxt], f]
                if not vk < vk1:
                    continue
                if j < min_leaf or m - j < min_leaf:
                    continue
                sl2 = 0.0
                sr2 = 0.0
                for c in range(q):
                    sl2 = sl2 + acc[c] * acc[c]
                    dj = tot[c] - acc[c]
                    sr2 = sr2 + dj * dj
                v = sl2 / j + sr2 / (m - j)
                if v > gain:
                    gain = v
                    best_k = k
            if best_k >= 0 and gain > best_gain:
                best_gain = gain
                best_f = f
                best_thr = _split_threshold(
                    X[rows[sidx[f, lo + best_k]], f],
                    X[rows[sidx[f, lo + best_k + 1]], f],
                )

        if best_f < 0:
            continue

        # stable partition of every per-node list by the split mask
        nl = 0
        for i in range(lo, hi):
            pos = plain[i]
            if X[rows[pos], best_f] < best_thr:
                inleft[pos] = 1
                nl += 1
            else:
                inleft[pos] = 0
        k = 0
        j = 0
        for i in range(lo, hi):
            pos = plain[i]
            if inleft[pos]:
                plain[lo + k] = pos
                k += 1
            else:
                tmp[j] = pos
                j += 1
        for i in range(j):
            plain[lo + nl + i] = tmp[i]
        for f in range(n_features):
            k = 0
            j = 0
            for i in range(lo, hi):
                pos = sidx[f, i]
                if inleft[pos]:
                    sidx[f, lo + k] = pos
                    k += 1
                else:
                    tmp[j] = pos
                    j += 1
            for i in range(j):
                sidx[f, lo + nl + i] = tmp[i]

        feature[nid] = best_f
        threshold[nid] = best_thr
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[nid] = lid
        right[nid] = rid
        stack[sp, 0] = rid
        stack[sp, 1] = lo + nl
        stack[sp, 2] = hi
        stack[sp, 3] = depth + 1
        sp += 1
        stack[sp, 0] = lid
        stack[sp, 1] = lo
        stack[sp, 2] = lo + nl
        stack[sp, 3] = depth + 1
        sp += 1

    return (
        feature_arr[:n_nodes].copy(),
        threshold_arr[:n_nodes].copy(),
        left_arr[:n_nodes].copy(),
        right_arr[:n_nodes].copy(),
        value_arr[:n_nodes].copy(),
    )


def predict_tree(tree, double[:, ::1] X):
    feature_arr, threshold_arr, left_arr, right_arr, value_arr = tree
    cdef i32[::1] feature = feature_arr
    cdef f64[::1] threshold = threshold_arr
    cdef i32[::1] left = left_arr
    cdef i32[::1] right = right_arr
    cdef f64[:, ::1] value = value_arr
    cdef int n = X.shape[0]
    cdef int q = value.shape[1]
    out_arr = np.empty((n, q), dtype=np.float64)
    cdef f64[:, ::1] out = out_arr
    cdef int i, c, node
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        for c in range(q):
            out[i, c] = value[node, c]
    return out_arr


# ---------------------------------------------------------------------------
# exact policy-tree search
# ---------------------------------------------------------------------------

def search_depth0(double[:, ::1] scores):
    cdef int n = scores.shape[0]
    cdef int d = scores.shape[1]
    cdef int i, a, best_a
    cdef double v, best
    tot_arr = np.zeros(d, dtype=np.float64)
    cdef f64[::1] tot = tot_arr
    for i in range(n):
        for a in range(d):
            tot[a] = tot[a] + scores[i, a]
    best = -INFINITY
    best_a = 0
    for a in range(d):
        if tot[a] > best:
            best = tot[a]
            best_a = a
    return float(best), best_a


cdef void _sort_feature(double[:, ::1] X, int f, i32* order, i32* tmp, f64* key) noexcept nogil:
    cdef int n = X.shape[0]
    cdef int i
    for i in range(n):
        order[i] = i
        key[i] = X[i, f]
    _merge_sort(key, order, tmp, 0, n)


cdef double _one_split_masked(double[:, ::1] scores, i32* order,
                              unsigned char* allowed, unsigned char* present,
                              int n, int d, f64* pref, f64* tot,
                              int* out_pos, int* out_al, int* out_ar) noexcept nogil:
    """Canonical best single split along one pre-sorted feature.

    Matches _ref._best_split_masked: split position j means the first j
    sorted units go left; positions are admissible per `allowed`; absent
    units contribute zero.  First maximizer in (position, pair) order wins.
    """
    cdef int j, a, u
    cdef double best, lv, rv, v, s
    cdef int best_pos = 0, best_al = 0, best_ar = 0
    cdef int al, ar
    for a in range(d):
        pref[a] = 0.0
        tot[a] = 0.0
    for j in range(n):
        u = order[j]
        if present[u]:
            for a in range(d):
                tot[a] = tot[a] + scores[u, a]
    best = -INFINITY
    for j in range(n + 1):
        if allowed[j]:
            lv = -INFINITY
            al = 0
            for a in range(d):
                if pref[a] > lv:
                    lv = pref[a]
                    al = a
            rv = -INFINITY
            ar = 0
            for a in range(d):
                s = tot[a] - pref[a]
                if s > rv:
                    rv = s
                    ar = a
            v = lv + rv
            if v > best:
                best = v
                best_pos = j
                best_al = al
                best_ar = ar
        if j < n:
            u = order[j]
            if present[u]:
                for a in range(d):
                    pref[a] = pref[a] + scores[u, a]
    out_pos[0] = best_pos
    out_al[0] = best_al
    out_ar[0] = best_ar
    return best


cdef inline double _pos_threshold(f64* sv, int n, int pos) noexcept nogil:
    if pos == 0:
        return -INFINITY
    if pos == n:
        return INFINITY
    return _split_threshold(sv[pos - 1], sv[pos])


def search_depth1(double[:, ::1] scores, double[:, ::1] X):
    cdef int n = X.shape[0]
    cdef int p = X.shape[1]
    cdef int d = scores.shape[1]
    orders_arr = np.empty((p, n), dtype=np.int32)
    sv_arr = np.empty((p, n), dtype=np.float64)
    allowed_arr = np.empty((p, n + 1), dtype=np.uint8)
    cdef i32[:, ::1] orders = orders_arr
    cdef f64[:, ::1] svs = sv_arr
    cdef unsigned char[:, ::1] alloweds = allowed_arr
    tmp_arr = np.empty(n, dtype=np.int32)
    key_arr = np.empty(n, dtype=np.float64)
    cdef i32[::1] tmp = tmp_arr
    cdef f64[::1] key = key_arr
    present_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] present = present_arr
    pref_arr = np.empty(d, dtype=np.float64)
    tot_arr = np.empty(d, dtype=np.float64)
    cdef f64[::1] pref = pref_arr
    cdef f64[::1] tot = tot_arr

    cdef int f, j, pos, al, ar
    cdef int best_f = 0, best_al = 0, best_ar = 0
    cdef double best = -INFINITY, v, best_thr = -INFINITY
    for f in range(p):
        _sort_feature(X, f, &orders[f, 0], &tmp[0], &key[0])
        for j in range(n):
            svs[f, j] = key[orders[f, j]]
        alloweds[f, 0] = 1
        alloweds[f, n] = 1
        for j in range(1, n):
            alloweds[f, j] = 1 if svs[f, j - 1] < svs[f, j] else 0
        v = _one_split_masked(scores, &orders[f, 0], &alloweds[f, 0],
                              &present[0], n, d, &pref[0], &tot[0], &pos, &al, &ar)
        if v > best:
            best = v
            best_f = f
            best_thr = _pos_threshold(&svs[f, 0], n, pos)
            best_al = al
            best_ar = ar
    return float(best), best_f, float(best_thr), best_al, best_ar


# --- lazy max segment tree over compressed split positions -----------------

cdef void _seg_build(f64* val, f64* lazy, f64* leaves, int cap, int length) noexcept nogil:
    cdef int i
    for i in range(cap):
        if i < length:
            val[cap + i] = leaves[i]
        else:
            val[cap + i] = -INFINITY
        lazy[cap + i] = 0.0
    for i in range(cap - 1, 0, -1):
        val[i] = val[2 * i] if val[2 * i] >= val[2 * i + 1] else val[2 * i + 1]
        lazy[i] = 0.0


cdef void _seg_add(f64* val, f64* lazy, int node, int node_lo, int node_hi,
                   int lo, int hi, double delta) noexcept nogil:
    # add delta on [lo, hi) within node covering [node_lo, node_hi)
    cdef int mid
    if lo <= node_lo and node_hi <= hi:
        val[node] += delta
        lazy[node] += delta
        return
    mid = (node_lo + node_hi) // 2
    if lo < mid:
        _seg_add(val, lazy, 2 * node, node_lo, mid, lo, hi, delta)
    if hi > mid:
        _seg_add(val, lazy, 2 * node + 1, mid, node_hi, lo, hi, delta)
    val[node] = lazy[node] + (val[2 * node] if val[2 * node] >= val[2 * node + 1] else val[2 * node + 1])


def search_depth2(double[:, ::1] scores, double[:, ::1] X):
    cdef int n = X.shape[0]
    cdef int p = X.shape[1]
    cdef int d = scores.shape[1]
    cdef int npairs = d * (d - 1)

    orders_arr = np.empty((p, n), dtype=np.int32)
    ranks_arr = np.empty((p, n), dtype=np.int32)
    sv_arr = np.empty((p, n), dtype=np.float64)
    allowed_arr = np.empty((p, n + 1), dtype=np.uint8)
    cfrom_arr = np.empty((p, n + 1), dtype=np.int32)
    clen_arr = np.empty(p, dtype=np.int32)
    cpos_arr = np.empty((p, n + 1), dtype=np.int32)
    cdef i32[:, ::1] orders = orders_arr
    cdef i32[:, ::1] ranks = ranks_arr
    cdef f64[:, ::1] svs = sv_arr
    cdef unsigned char[:, ::1] alloweds = allowed_arr
    cdef i32[:, ::1] cfrom = cfrom_arr
    cdef i32[::1] clen = clen_arr
    cdef i32[:, ::1] cpos = cpos_arr

    tmp_arr = np.empty(n, dtype=np.int32)
    key_arr = np.empty(n, dtype=np.float64)
    cdef i32[::1] tmp = tmp_arr
    cdef f64[::1] key = key_arr

    cdef int f, j, c, a, q, u, i
    for f in range(p):
        _sort_feature(X, f, &orders[f, 0], &tmp[0], &key[0])
        for j in range(n):
            svs[f, j] = key[orders[f, j]]
            ranks[f, orders[f, j]] = j
        alloweds[f, 0] = 1
        alloweds[f, n] = 1
        for j in range(1, n):
            alloweds[f, j] = 1 if svs[f, j - 1] < svs[f, j] else 0
        c = 0
        for j in range(n + 1):
            cfrom[f, j] = c
            if alloweds[f, j]:
                cpos[f, c] = j
                c += 1
        clen[f] = c

    cdef int cap = 1
    while cap < n + 1:
        cap *= 2

    # pair table (ordered unequal pairs, lexicographic)
    pair_l_arr = np.empty(npairs, dtype=np.int32)
    pair_r_arr = np.empty(npairs, dtype=np.int32)
    cdef i32[::1] pair_l = pair_l_arr
    cdef i32[::1] pair_r = pair_r_arr
    q = 0
    for a in range(d):
        for c in range(d):
            if a != c:
                pair_l[q] = a
                pair_r[q] = c
                q += 1

    # segment trees: [child, feature, pair] -> (val, lazy) arrays of 2*cap
    tval_arr = np.zeros((2, p, npairs, 2 * cap), dtype=np.float64)
    tlaz_arr = np.zeros((2, p, npairs, 2 * cap), dtype=np.float64)
    cdef f64[:, :, :, ::1] tval = tval_arr
    cdef f64[:, :, :, ::1] tlaz = tlaz_arr

    leaves_arr = np.empty(cap, dtype=np.float64)
    cdef f64[::1] leaves = leaves_arr
    run_arr = np.empty(1, dtype=np.float64)
    cdef f64[::1] run = run_arr

    tot_arr = np.zeros((2, d), dtype=np.float64)
    cdef f64[:, ::1] tot = tot_arr
    full_tot_arr = np.zeros(d, dtype=np.float64)
    cdef f64[::1] full_tot = full_tot_arr
    for i in range(n):
        for a in range(d):
            full_tot[a] = full_tot[a] + scores[i, a]

    inleft_arr = np.zeros(n, dtype=np.uint8)
    notleft_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] inleft = inleft_arr
    cdef unsigned char[::1] notleft = notleft_arr

    pref_arr = np.empty(d, dtype=np.float64)
    tot2_arr = np.empty(d, dtype=np.float64)
    cdef f64[::1] pref = pref_arr
    cdef f64[::1] tot2 = tot2_arr

    cdef double gbest = -INFINITY
    cdef int groot_f = 0, groot_pos = 0
    cdef int gl_f = 0, gl_pos = 0, gl_al = 0, gl_ar = 0
    cdef int gr_f = 0, gr_pos = 0, gr_al = 0, gr_ar = 0

    cdef int froot, ci, pos, prev, r, f2, side
    cdef int o_pos, o_al, o_ar
    cdef double delta, stepval, bl, br, vv, best_side, cv
    cdef int c0

    for froot in range(p):
        # reset: left empty, right full
        for i in range(n):
            inleft[i] = 0
            notleft[i] = 1
        for a in range(d):
            tot[0, a] = 0.0
            tot[1, a] = full_tot[a]
        for f2 in range(p):
            for c in range(clen[f2]):
                leaves[c] = 0.0
            for q in range(npairs):
                _seg_build(&tval[0, f2, q, 0], &tlaz[0, f2, q, 0], &leaves[0], cap, clen[f2])
            for q in range(npairs):
                # right child holds every unit: leaf c is the prefix sum of
                # score deltas over sorted ranks below the c-th allowed position
                run[0] = 0.0
                c = 0
                for j in range(n + 1):
                    if alloweds[f2, j]:
                        leaves[c] = run[0]
                        c += 1
                    if j < n:
                        u = orders[f2, j]
                        run[0] = run[0] + (scores[u, pair_l[q]] - scores[u, pair_r[q]])
                _seg_build(&tval[1, f2, q, 0], &tlaz[1, f2, q, 0], &leaves[0], cap, clen[f2])

        prev = 0
        for ci in range(clen[froot]):
            pos = cpos[froot, ci]
            # move units with root-feature rank in [prev, pos) from right to left
            for r in range(prev, pos):
                u = orders[froot, r]
                inleft[u] = 1
                notleft[u] = 0
                for a in range(d):
                    tot[0, a] = tot[0, a] + scores[u, a]
                    tot[1, a] = tot[1, a] - scores[u, a]
                for f2 in range(p):
                    c0 = cfrom[f2, ranks[f2, u] + 1]
                    for q in range(npairs):
                        delta = scores[u, pair_l[q]] - scores[u, pair_r[q]]
                        if c0 < clen[f2]:
                            _seg_add(&tval[0, f2, q, 0], &tlaz[0, f2, q, 0],
                                     1, 0, cap, c0, clen[f2], delta)
                            _seg_add(&tval[1, f2, q, 0], &tlaz[1, f2, q, 0],
                                     1, 0, cap, c0, clen[f2], -delta)
            prev = pos

            # step value from tree roots + child totals
            stepval = 0.0
            for side in range(2):
                best_side = -INFINITY
                for a in range(d):
                    if tot[side, a] > best_side:
                        best_side = tot[side, a]
                for f2 in range(p):
                    for q in range(npairs):
                        vv = tot[side, pair_r[q]] + tval[side, f2, q, 1]
                        if vv > best_side:
                            best_side = vv
                stepval = stepval + best_side

            if stepval > gbest:
                gbest = stepval
                groot_f = froot
                groot_pos = pos
                # canonical recompute of both children
                bl = -INFINITY
                for f2 in range(p):
                    cv = _one_split_masked(scores, &orders[f2, 0],
                                           &alloweds[f2, 0], &inleft[0], n, d,
                                           &pref[0], &tot2[0], &o_pos, &o_al, &o_ar)
                    if cv > bl:
                        bl = cv
                        gl_f = f2
                        gl_pos = o_pos
                        gl_al = o_al
                        gl_ar = o_ar
                br = -INFINITY
                for f2 in range(p):
                    cv = _one_split_masked(scores, &orders[f2, 0],
                                           &alloweds[f2, 0], &notleft[0], n, d,
                                           &pref[0], &tot2[0], &o_pos, &o_al, &o_ar)
                    if cv > br:
                        br = cv
                        gr_f = f2
                        gr_pos = o_pos
                        gr_al = o_al
                        gr_ar = o_ar

    cdef double root_thr = _pos_threshold(&svs[groot_f, 0], n, groot_pos)
    cdef double l_thr = _pos_threshold(&svs[gl_f, 0], n, gl_pos)
    cdef double r_thr = _pos_threshold(&svs[gr_f, 0], n, gr_pos)
    return (
        float(gbest),
        (groot_f, float(root_thr)),
        (gl_f, float(l_thr), gl_al, gl_ar),
        (gr_f, float(r_thr), gr_al, gr_ar),
    )
