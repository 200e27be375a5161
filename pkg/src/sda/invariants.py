"""Runtime checks of the promotion and level conditions (paranoid mode)."""
from __future__ import annotations

import numpy as np

from .model import VersionStats, compute_stats
from .store import DATA


def _entry_labels(sda, min_level: int, strict_above: bool = False) -> np.ndarray:
    """Sorted DFS labels of versions owning a value entry at levels >= min_level."""
    key = (min_level, tuple(sda.epoch[min_level:]), len(sda.tree))
    hit = sda._edge_cache.get(min_level)
    if hit is not None and hit[0] == key:
        return hit[1]
    vs: set[int] = set()
    for l in range(min_level, sda.height):
        for aid in sda.data[l]:
            vs |= sda.device.arrays[aid].entry_versions()
    labels = np.sort(sda.tree.dfs[np.fromiter(vs, dtype=np.int64)]) if vs else np.zeros(0, np.int64)
    sda._edge_cache[min_level] = (key, labels)
    return labels


def _has_strict_descendant(sda, labels: np.ndarray, v: int) -> bool:
    lo, hi = sda.tree.dfs[v], sda.tree.hi[v]
    i = np.searchsorted(labels, lo, side="right")
    return i < labels.shape[0] and labels[i] <= hi


def check_promotion(sda, cand, L: int) -> list[str]:
    tree = sda.tree
    st = compute_stats(cand.keys, cand.vers, cand.versions, tree)
    out = []
    tag = f"promotion to level {L} (orphan {cand.orphan})"
    if len(st.orphans) != 1:
        out.append(f"{tag}: P-orphan fails, orphans {st.orphans}")
        return out
    v = st.orphans[0]
    n = st.n
    p_live = st.live_at(tree.parent[v])
    if st.lead[v] <= 0:
        out.append(f"{tag}: P-non-trivial fails")
    if n >= 1 << (L + 1):
        out.append(f"{tag}: P-max-size fails, |A|={n}")
    if 3 * p_live >= 1 << (L + 1):
        out.append(f"{tag}: P-plive fails, live(parent)={p_live}")
    if 3 * st.live[v] < 1 << L or 3 * st.lead_below[v] < 1 << (L + 1) or n < 1 << L:
        out.append(f"{tag}: P-prom fails, live={st.live[v]} lead_below={st.lead_below[v]} |A|={n}")
    if L < sda.height and _has_strict_descendant(sda, _entry_labels(sda, L), v):
        out.append(f"{tag}: P-edge fails")
    return out


def check_array(sda, arr) -> list[str]:
    """Level conditions for one alive data array (cached until it changes)."""
    l = arr.level
    key = (len(arr.versions), tuple(sda.epoch[l + 1:]), len(sda.tree))
    hit = sda._check_cache.get(arr.array_id)
    if hit is not None and hit[0] == key:
        return hit[1]
    st = sda.stats_of(arr)
    out = []
    vs = st.versions
    real = vs[st.lead[vs] > 0]
    if real.size:
        n = st.n
        tag = f"array {arr.array_id} level {l}"
        M = 1 << (l + 1)
        live = st.live
        bad = real[3 * live[real] < n]
        if bad.size:
            out.append(f"{tag}: L-dense fails at {bad.tolist()[:5]}")
        if n > M:
            out.append(f"{tag}: L-size fails |A|={n}")
        bad = real[3 * live[real] < (1 << l)]
        if bad.size:
            out.append(f"{tag}: L-live fails at {bad.tolist()[:5]}")
        parents = {sda.tree.parent[o] for o in st.orphans}
        if len(parents) != 1:
            out.append(f"{tag}: not a stratum")
        elif 3 * st.live_at(parents.pop()) >= M:
            out.append(f"{tag}: L-plive fails")
        prom = (st.lam_t[vs] >= M) & (3 * st.lead_below[vs] >= 2 * M) & (st.lead[vs] > 0) & (3 * live[vs] >= M)
        if prom.any():
            out.append(f"{tag}: L-no-prom fails at {vs[prom].tolist()[:5]}")
        edge = vs[3 * live[vs] >= M]
        if edge.size and l + 1 < sda.height:
            labels = _entry_labels(sda, l + 1)
            bad = [int(v) for v in edge if _has_strict_descendant(sda, labels, int(v))]
            if bad:
                out.append(f"{tag}: L-edge fails at {bad[:5]}")
    sda._check_cache[arr.array_id] = (key, out)
    return out


def check_levels(sda) -> list[str]:
    out = []
    for l in range(sda.height):
        for aid in sda.data[l]:
            arr = sda.device.arrays[aid]
            if arr.kind == DATA and arr.state == "alive":
                out.extend(check_array(sda, arr))
        seen: set[int] = set()
        for aid in sda.data[l]:
            vs = sda.device.arrays[aid].versions
            if seen & vs:
                out.append(f"level {l}: overlapping version sets")
            seen |= vs
    return out


def split_preconditions(st: VersionStats, level: int) -> list[str]:
    """(cD)/(cS) on a version-split input, and the big-live-implies-small-split bound."""
    M = 1 << (level + 1)
    out = []
    parents = {st.tree.parent[o] for o in st.orphans}
    if len(parents) != 1:
        return [f"split input at level {level} is not a stratum"]
    p = parents.pop()
    if 3 * st.live_at(p) >= M:
        out.append(f"split level {level}: cD fails at parent {p}")
    vs = st.versions
    live, lam = st.live[vs], st.lam_t[vs]
    dense = (lam == 0) | (3 * live >= lam)
    bad = vs[~dense & (3 * live >= M)]
    if bad.size:
        out.append(f"split level {level}: cD fails at {bad.tolist()[:5]}")
    bad = vs[dense & (lam >= M)]
    if bad.size:
        out.append(f"split level {level}: cS fails at {bad.tolist()[:5]}")
    bad = vs[(3 * live >= M) & (lam >= M)]
    if bad.size:
        out.append(f"split level {level}: live/size bound fails at {bad.tolist()[:5]}")
    return out
