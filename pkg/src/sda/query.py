"""Point and range lookups across levels, plus redundant forward pointers."""
from __future__ import annotations

import numpy as np

from . import kernels
from .store import DATA, FP, SLOT, VALUE, BlockDevice, StoredArray


def insert_slots(keys, vers, tags, pay, k: int):
    """Interleave an empty redundant-FP slot after every k-1 rows (never at the end)."""
    n = keys.shape[0]
    m = (n - 1) // (k - 1) if n > 0 else 0
    if m == 0:
        return keys, vers, tags, pay
    total = n + m
    pos = np.arange(n, dtype=np.int64)
    pos += pos // (k - 1)
    slot_pos = np.arange(1, m + 1, dtype=np.int64) * k - 1
    src = np.arange(1, m + 1, dtype=np.int64) * (k - 1) - 1
    ok, ov = np.empty(total, np.int64), np.empty(total, np.int64)
    ot, op = np.empty(total, np.uint8), np.empty(total, np.int64)
    ok[pos], ov[pos], ot[pos], op[pos] = keys, vers, tags, pay
    ok[slot_pos], ov[slot_pos] = keys[src], vers[src]
    ot[slot_pos], op[slot_pos] = SLOT, -1
    return ok, ov, ot, op


def fill_redundant_fps(device: BlockDevice, arr: StoredArray) -> None:
    """Write into each slot the targets of the nearest real FPs to its left and right."""
    slots = np.flatnonzero(arr.tags == SLOT)
    if slots.size == 0:
        return
    n = len(arr)
    idx = np.arange(n)
    fp = arr.tags == FP
    left = np.maximum.accumulate(np.where(fp, idx, -1))
    right = np.minimum.accumulate(np.where(fp, idx, n)[::-1])[::-1]
    li = left[slots]
    ri = right[slots]
    arr.pay[slots] = np.where(li >= 0, arr.pay[np.maximum(li, 0)], -1)
    arr.pay2[slots] = np.where(ri < n, arr.pay[np.minimum(ri, n - 1)], -1)
    if fp.any():
        b = device.blocks(n)
        device.charge_reads(b)
        device.charge_writes(b)


def _chain(sda, version):
    return [(l, reg[version]) for l, reg in enumerate(sda.reg) if version in reg]


def _hint(sda, arr, below, above, nxt_id):
    if arr.next_array is None or arr.next_array != nxt_id or not sda.device.is_alive(nxt_id):
        return None, None
    nxt = sda.device.arrays[nxt_id]
    lb = below + 1 if below is not None else 0
    ub = above if above is not None else len(nxt)
    if lb > ub or ub > len(nxt):
        return None, None
    return lb, ub


def point_query(sda, key: int, version: int):
    """Closest-ancestor value of ``key`` at ``version`` as (value, writing_version), or None."""
    tree, dev = sda.tree, sda.device
    tree._check(version)
    dv, dfs, hi = tree.dfs[version], tree.dfs, tree.hi
    chain = _chain(sda, version)
    lb = ub = None
    for pos, (_, aid) in enumerate(chain):
        arr = dev.arrays[aid]
        loc, below, above = dev.search(arr, key, version, tree, lb, ub)
        if arr.kind == DATA:
            hit, end = kernels.hit(arr.keys, arr.vers, arr.tags, dfs, hi, key, dv, loc)
            if hit >= 0:
                dev.charge_span(arr, loc, hit + 1)
                return int(arr.pay[hit]), int(arr.vers[hit])
            # the row after the run is read to see the run end
            dev.charge_span(arr, loc, min(end + 1, len(arr)))
        nxt_id = chain[pos + 1][1] if pos + 1 < len(chain) else None
        lb, ub = _hint(sda, arr, below, above, nxt_id)
    return None


def range_query(sda, start: int, end: int, version: int) -> list[tuple[int, int]]:
    """All (key, value) pairs live at ``version`` with start <= key <= end, in key order."""
    if start > end:
        raise ValueError("start_key > end_key")
    tree, dev = sda.tree, sda.device
    tree._check(version)
    dv = tree.dfs[version]
    chain = _chain(sda, version)
    parts_k, parts_v, parts_p = [], [], []
    lb = ub = None
    for pos, (_, aid) in enumerate(chain):
        arr = dev.arrays[aid]
        loc, below, above = dev.search(arr, start, version, tree, lb, ub)
        if arr.kind == DATA:
            stop = int(np.searchsorted(arr.keys, end, side="right"))
            dev.charge_span(arr, loc, min(stop + 1, len(arr)))
            if stop > loc:
                sl = slice(loc, stop)
                m = arr.tags[sl] == VALUE
                parts_k.append(arr.keys[sl][m])
                parts_v.append(arr.vers[sl][m])
                parts_p.append(arr.pay[sl][m])
        nxt_id = chain[pos + 1][1] if pos + 1 < len(chain) else None
        lb, ub = _hint(sda, arr, below, above, nxt_id)
    if not parts_k:
        return []
    k = np.concatenate(parts_k)
    v = np.concatenate(parts_v)
    p = np.concatenate(parts_p)
    anc = (tree.dfs[v] <= dv) & (dv <= tree.hi[v])
    k, v, p = k[anc], v[anc], p[anc]
    if k.size == 0:
        return []
    order = np.lexsort((-tree.dfs[v], k))
    k, p = k[order], p[order]
    first = np.concatenate(([True], k[1:] != k[:-1]))
    return list(zip(k[first].tolist(), p[first].tolist()))
