"""Version-set selection for merges: promotable search and version splitting.

All functions work on a :class:`~sda.model.VersionStats` for the merged array
and return version ids / version sets; extraction happens elsewhere.
"""
from __future__ import annotations

from .model import VersionStats, compute_stats


def find_promotable(stats: VersionStats, w: int, threshold: int) -> int | None:
    """Oldest version in the subtree of ``w`` whose split is promotable at ``threshold``.

    Children are tried in ascending DFS order; the search is pruned as soon as
    the split size or lead_below guard fails, since both shrink down the tree.
    """
    if w not in stats.vparent and w not in stats.orphans:
        raise KeyError(f"version {w} not in the array's version set")
    M = threshold
    stack = [w]
    while stack:
        u = stack.pop()
        if stats.lam_t[u] < M or 3 * stats.lead_below[u] < 2 * M:
            continue
        if stats.lead[u] > 0 and 3 * stats.live[u] >= M:
            return u
        stack.extend(reversed(stats.vchildren.get(u, ())))
    return None


def find_dense_kids(stats: VersionStats, candidates: list[int]) -> list[int]:
    """Descend through least-dense versions until every candidate is dense in its subtree."""
    if not candidates:
        raise ValueError("no candidates")
    dfs = stats.tree.dfs
    live, lam = stats.live, stats.lam_t
    cands = list(candidates)

    def delta(x):
        # live/lam as a float orders exactly for counts far below 2**26
        return live[x] / lam[x] if lam[x] else 1.0

    while True:
        u = min(cands, key=lambda x: (delta(x), dfs[x]))
        if 3 * live[u] > lam[u] or lam[u] == 0:
            return sorted(cands, key=lambda x: (-int(stats.lead_below[x]), dfs[x]))
        kids = stats.vchildren.get(u)
        if not kids:  # pragma: no cover - an empty subtree has delta 1
            raise AssertionError(f"version {u} is sparse but has no children")
        cands = list(kids)


def version_split(stats: VersionStats, level: int, on_split=None) -> list[set[int]]:
    """Partition a stratum's versions into sets that can stay at ``level``.

    ``on_split`` is called with each intermediate stats object before it is
    split (used by the invariant checker).
    """
    M = 1 << (level + 1)
    out: list[set[int]] = []
    st = stats
    while True:
        if on_split is not None:
            on_split(st)
        kids = find_dense_kids(st, list(st.orphans))
        subtrees = [st.subtree(u) for u in kids]
        acc: set[int] = set()
        U: set[int] | None = None
        for i, u in enumerate(kids):
            prev = set(acc)
            acc.update(subtrees[i])
            if st.split_size(acc) > min(M, 3 * int(st.live[u])):
                U = prev if prev else set(acc)
                break
        remaining = st.vset
        if U is None:
            U = acc
        out.append(U)
        if len(U) == len(remaining):
            return out
        st = compute_stats(st.keys, st.vers, remaining - U, st.tree, fparent=st.fparent)
