"""Hot inner loops over kv-sorted entry columns.

Every kernel has a numba ``@njit`` loop version and a numpy version. The numba
versions are used unless ``SDA_DISABLE_NUMBA=1`` is set in the environment or
numba cannot be imported. Both variants are importable directly (``nb_*`` and
``np_*``) for benchmarking and cross-checking.

Conventions: rows are sorted by key ascending then DFS label descending; ``d``
holds each row's DFS label and ``h`` the top of that version's subtree interval.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USING_NUMBA = numba is not None and os.environ.get("SDA_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def _njit(f):
    if numba is None:  # pragma: no cover
        return f
    return numba.njit(cache=True, nogil=True)(f)


# ---------------------------------------------------------------- loop kernels

def _forest_loop(keys, d, h):
    """Nearest ancestor row with the same key, or -1."""
    n = keys.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    e = n
    while e > 0:
        s = e - 1
        k = keys[s]
        while s > 0 and keys[s - 1] == k:
            s -= 1
        if e - s > 1:
            top = 0
            for i in range(e - 1, s - 1, -1):
                di = d[i]
                while top > 0 and h[stack[top - 1]] < di:
                    top -= 1
                if top > 0:
                    parent[i] = stack[top - 1]
                stack[top] = i
                top += 1
        e = s
    return parent


def _live_loop(parent, d, h, nlabels):
    diff = np.zeros(nlabels + 1, dtype=np.int64)
    for i in range(parent.shape[0]):
        if parent[i] < 0:
            diff[d[i]] += 1
            diff[h[i] + 1] -= 1
    out = np.empty(nlabels, dtype=np.int64)
    acc = 0
    for j in range(nlabels):
        acc += diff[j]
        out[j] = acc
    return out


def _omega_loop(parent, d, h, markpre):
    """Row is live at some marked version; markpre[j] = #marked labels < j."""
    n = parent.shape[0]
    sub = np.empty(n, dtype=np.int64)
    for i in range(n):
        sub[i] = markpre[h[i] + 1] - markpre[d[i]]
    for i in range(n):
        p = parent[i]
        if p >= 0:
            sub[p] -= markpre[h[i] + 1] - markpre[d[i]]
    out = np.empty(n, dtype=np.bool_)
    for i in range(n):
        out[i] = sub[i] > 0
    return out


def _select_loop(parent, d, h, labs):
    """Indices of rows live at some version whose label is in the sorted array ``labs``."""
    n = parent.shape[0]
    sub = np.empty(n, dtype=np.int64)
    for i in range(n):
        sub[i] = np.searchsorted(labs, h[i], side="right") - np.searchsorted(labs, d[i], side="left")
    for i in range(n):
        p = parent[i]
        if p >= 0:
            sub[p] -= np.searchsorted(labs, h[i], side="right") - np.searchsorted(labs, d[i], side="left")
    cnt = 0
    for i in range(n):
        if sub[i] > 0:
            cnt += 1
    out = np.empty(cnt, dtype=np.int64)
    j = 0
    for i in range(n):
        if sub[i] > 0:
            out[j] = i
            j += 1
    return out


def _merge_loop(ka, da, ta, kb, db, tb):
    """Permutation interleaving two sorted runs; index >= len(a) refers to b."""
    na = ka.shape[0]
    nb = kb.shape[0]
    out = np.empty(na + nb, dtype=np.int64)
    i = 0
    j = 0
    o = 0
    while i < na and j < nb:
        take_a = True
        if kb[j] < ka[i]:
            take_a = False
        elif kb[j] == ka[i]:
            if db[j] > da[i]:
                take_a = False
            elif db[j] == da[i] and tb[j] < ta[i]:
                take_a = False
        if take_a:
            out[o] = i
            i += 1
        else:
            out[o] = na + j
            j += 1
        o += 1
    while i < na:
        out[o] = i
        i += 1
        o += 1
    while j < nb:
        out[o] = na + j
        j += 1
        o += 1
    return out


def _merge_rows_loop(ka, va, pa, kb, vb, pb, dfs):
    """Merge two kv-sorted value runs; on a full tie the row of ``a`` comes first."""
    na = ka.shape[0]
    nb = kb.shape[0]
    k = np.empty(na + nb, dtype=np.int64)
    v = np.empty(na + nb, dtype=np.int64)
    p = np.empty(na + nb, dtype=np.int64)
    i = 0
    j = 0
    for o in range(na + nb):
        if j >= nb:
            take_a = True
        elif i >= na:
            take_a = False
        else:
            take_a = not (kb[j] < ka[i] or (kb[j] == ka[i] and dfs[vb[j]] > dfs[va[i]]))
        if take_a:
            k[o] = ka[i]
            v[o] = va[i]
            p[o] = pa[i]
            i += 1
        else:
            k[o] = kb[j]
            v[o] = vb[j]
            p[o] = pb[j]
            j += 1
    return k, v, p


def _runs_loop(keys, vers, v):
    """First row of each key run, rows written at v, and how many of the firsts were."""
    n = keys.shape[0]
    cnt = 0
    lead = 0
    for i in range(n):
        if i == 0 or keys[i] != keys[i - 1]:
            cnt += 1
        if vers[i] == v:
            lead += 1
    idx = np.empty(cnt, dtype=np.int64)
    first_lead = 0
    j = 0
    for i in range(n):
        if i == 0 or keys[i] != keys[i - 1]:
            idx[j] = i
            j += 1
            if vers[i] == v:
                first_lead += 1
    return idx, lead, first_lead


def _hit_loop(keys, vers, tags, dfs, hi, k, dv, loc):
    """From ``loc``, first value row for key k whose version is an ancestor of label dv.

    Returns (hit or -1, end of the key's run).
    """
    n = keys.shape[0]
    i = loc
    while i < n and keys[i] == k:
        if tags[i] == 0:
            x = vers[i]
            if dfs[x] <= dv and dv <= hi[x]:
                return i, i + 1
        i += 1
    return -1, i


def _search_loop(keys, vers, dfs, k, dk, lo, hi, block):
    """Least index in [lo, hi) with row >= (k, dk); returns (loc, probes charged, last block probed)."""
    reads = 0
    last = -1
    while lo < hi:
        mid = (lo + hi) >> 1
        b = mid // block
        if b != last:
            reads += 1
            last = b
        km = keys[mid]
        if km < k or (km == k and dfs[vers[mid]] > dk):
            lo = mid + 1
        else:
            hi = mid
    return lo, reads, last


def _stats_loop(keys, vers, dfs, hi, in_v, fparent):
    """Fused per-array statistics; returns (ok, fparent, live, rowcount, lead, lead_below, lam_t).

    All outputs except fparent are indexed by version id. ``fparent`` may be
    empty, in which case it is computed.
    """
    n = keys.shape[0]
    nv = dfs.shape[0]
    d = np.empty(n, dtype=np.int64)
    h = np.empty(n, dtype=np.int64)
    ok = True
    for i in range(n):
        d[i] = dfs[vers[i]]
        h[i] = hi[vers[i]]
        if i > 0 and (keys[i] < keys[i - 1] or (keys[i] == keys[i - 1] and d[i] > d[i - 1])):
            ok = False
    if fparent.shape[0] != n:
        fparent = nb_forest(keys, d, h)
    live_lab = nb_live(fparent, d, h, nv)
    markpre = np.zeros(nv + 1, dtype=np.int64)
    for v in range(nv):
        if in_v[v]:
            markpre[dfs[v] + 1] = 1
    for j in range(nv):
        markpre[j + 1] += markpre[j]
    om = nb_omega(fparent, d, h, markpre)
    rowcount = np.zeros(nv, dtype=np.int64)
    wlab = np.zeros(nv + 1, dtype=np.int64)
    for i in range(n):
        rowcount[vers[i]] += 1
        if om[i]:
            wlab[d[i] + 1] += 1
    leadlab = np.zeros(nv + 1, dtype=np.int64)
    for v in range(nv):
        if in_v[v]:
            leadlab[dfs[v] + 1] += rowcount[v]
    for j in range(nv):
        leadlab[j + 1] += leadlab[j]
        wlab[j + 1] += wlab[j]
    live = np.empty(nv, dtype=np.int64)
    lead = np.zeros(nv, dtype=np.int64)
    lead_below = np.zeros(nv, dtype=np.int64)
    lam_t = np.zeros(nv, dtype=np.int64)
    for v in range(nv):
        live[v] = live_lab[dfs[v]]
    for v in range(nv):
        if in_v[v]:
            lead[v] = rowcount[v]
            lead_below[v] = leadlab[hi[v] + 1] - leadlab[dfs[v]]
            lam_t[v] = live[v] + wlab[hi[v] + 1] - wlab[dfs[v] + 1]
    return ok, fparent, live, rowcount, lead, lead_below, lam_t


# ---------------------------------------------------------------- numpy variants

def np_forest(keys, d, h):
    n = keys.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    if n < 2:
        return parent
    same = keys[1:] == keys[:-1]
    if not same.any():
        return parent
    # only multi-row runs need the stack walk
    starts = np.flatnonzero(np.concatenate(([True], ~same)))
    ends = np.append(starts[1:], n)
    for s, e in zip(starts[ends - starts > 1].tolist(), ends[ends - starts > 1].tolist()):
        stack: list[int] = []
        for i in range(e - 1, s - 1, -1):
            di = d[i]
            while stack and h[stack[-1]] < di:
                stack.pop()
            if stack:
                parent[i] = stack[-1]
            stack.append(i)
    return parent


def np_live(parent, d, h, nlabels):
    roots = parent < 0
    diff = np.bincount(d[roots], minlength=nlabels + 1)[: nlabels + 1].astype(np.int64)
    diff -= np.bincount(h[roots] + 1, minlength=nlabels + 1)[: nlabels + 1]
    return np.cumsum(diff[:nlabels])


def np_omega(parent, d, h, markpre):
    sub = markpre[h + 1] - markpre[d]
    has = parent >= 0
    adj = np.bincount(parent[has], weights=sub[has], minlength=parent.shape[0]) if has.any() else 0
    return (sub - adj) > 0


def np_select(parent, d, h, labs):
    sub = np.searchsorted(labs, h, side="right") - np.searchsorted(labs, d, side="left")
    has = parent >= 0
    if has.any():
        sub = sub - np.bincount(parent[has], weights=sub[has], minlength=parent.shape[0]).astype(np.int64)
    return np.flatnonzero(sub > 0)


def np_merge(ka, da, ta, kb, db, tb):
    keys = np.concatenate((ka, kb))
    d = np.concatenate((da, db))
    t = np.concatenate((ta, tb))
    return np.lexsort((t, -d, keys))


def np_merge_rows(ka, va, pa, kb, vb, pb, dfs):
    za = np.zeros(ka.shape[0], np.uint8)
    order = np_merge(ka, dfs[va], za, kb, dfs[vb], np.zeros(kb.shape[0], np.uint8))
    return np.concatenate((ka, kb))[order], np.concatenate((va, vb))[order], np.concatenate((pa, pb))[order]


def np_runs(keys, vers, v):
    first = np.ones(keys.shape[0], dtype=np.bool_)
    first[1:] = keys[1:] != keys[:-1]
    idx = np.flatnonzero(first)
    return idx, int(np.count_nonzero(vers == v)), int(np.count_nonzero(vers[idx] == v))


def np_hit(keys, vers, tags, dfs, hi, k, dv, loc):
    end = int(np.searchsorted(keys, k, side="right"))
    if end <= loc:
        return -1, loc
    x = vers[loc:end]
    ok = (tags[loc:end] == 0) & (dfs[x] <= dv) & (dv <= hi[x])
    j = int(np.argmax(ok))
    if ok[j]:
        return loc + j, loc + j + 1
    return -1, end


def np_search(keys, vers, dfs, k, dk, lo, hi, block):
    return _search_loop(keys, vers, dfs, k, dk, lo, hi, block)


def np_stats(keys, vers, dfs, hi, in_v, fparent):
    n = keys.shape[0]
    nv = dfs.shape[0]
    d = dfs[vers]
    h = hi[vers]
    ok = True
    if n > 1:
        dk = np.diff(keys)
        ok = not ((dk < 0) | ((dk == 0) & (np.diff(d) > 0))).any()
    if fparent.shape[0] != n:
        fparent = np_forest(keys, d, h)
    live = np_live(fparent, d, h, nv)[dfs]
    mark = np.zeros(nv, dtype=np.int64)
    mark[dfs[in_v]] = 1
    pre = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(mark, out=pre[1:])
    om = np_omega(fparent, d, h, pre)
    rowcount = np.bincount(vers, minlength=nv).astype(np.int64)
    lead = np.where(in_v, rowcount, 0)
    leadlab = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(np.bincount(dfs, weights=lead, minlength=nv).astype(np.int64), out=leadlab[1:])
    lead_below = np.where(in_v, leadlab[hi + 1] - leadlab[dfs], 0)
    wlab = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(np.bincount(d[om], minlength=nv), out=wlab[1:])
    lam_t = np.where(in_v, live + wlab[hi + 1] - wlab[dfs + 1], 0)
    return ok, fparent, live, rowcount, lead, lead_below, lam_t


np_search.__doc__ = _search_loop.__doc__

if numba is not None:
    nb_forest = _njit(_forest_loop)
    nb_live = _njit(_live_loop)
    nb_omega = _njit(_omega_loop)
    nb_select = _njit(_select_loop)
    nb_merge_rows = _njit(_merge_rows_loop)
    nb_runs = _njit(_runs_loop)
    nb_hit = _njit(_hit_loop)
    nb_merge = _njit(_merge_loop)
    nb_search = _njit(_search_loop)
    nb_stats = _njit(_stats_loop)
else:  # pragma: no cover
    nb_forest, nb_live, nb_omega, nb_merge, nb_search, nb_stats = (np_forest, np_live, np_omega, np_merge,
                                                                 np_search, np_stats)
    nb_select, nb_merge_rows, nb_runs, nb_hit = np_select, np_merge_rows, np_runs, np_hit

if USING_NUMBA:
    forest, live, omega, merge_perm, search, stats = nb_forest, nb_live, nb_omega, nb_merge, nb_search, nb_stats
    select, merge_rows, runs, hit = nb_select, nb_merge_rows, nb_runs, nb_hit
else:
    forest, live, omega, merge_perm, search, stats = np_forest, np_live, np_omega, np_merge, np_search, np_stats
    select, merge_rows, runs, hit = np_select, np_merge_rows, np_runs, np_hit
