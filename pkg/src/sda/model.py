"""Per-array version statistics: lead, live, lead_below and subtree split sizes.

An entry (k, x) is live at v when x is an ancestor of v and no other entry for k
sits strictly between them. All counts are produced in O(n + |tree|) from the
kv-sorted columns: each entry's nearest same-key ancestor entry gives its
"shadow" children, and every count reduces to ranges over DFS labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from . import kernels
from .versions import VersionTree

DENSE = Fraction(1, 3)


class NotAStratum(ValueError):
    pass


def check_sorted(keys: np.ndarray, d: np.ndarray) -> None:
    if keys.shape[0] < 2:
        return
    dk = np.diff(keys)
    if (dk < 0).any() or ((dk == 0) & (np.diff(d) > 0)).any():
        raise ValueError("entries are not in kv order")


@dataclass
class VersionStats:
    tree: VersionTree
    keys: np.ndarray
    vers: np.ndarray
    versions: np.ndarray          # valid versions, ascending DFS label
    rowcount: np.ndarray          # id -> entries written at id
    live: np.ndarray              # id -> live count, for every version of the tree
    lead: np.ndarray              # id -> lead count (0 outside V)
    lead_below: np.ndarray
    lam_t: np.ndarray             # id -> |lambda_T(v)| (0 outside V)
    fparent: np.ndarray           # nearest same-key ancestor row
    vparent: dict[int, int] = field(default_factory=dict)
    vchildren: dict[int, list[int]] = field(default_factory=dict)
    orphans: list[int] = field(default_factory=list)
    _labels_at: int = 0
    _d: np.ndarray | None = None
    _h: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.keys.shape[0])

    @property
    def vset(self) -> frozenset[int]:
        return frozenset(self.versions.tolist())

    def _dh(self) -> tuple[np.ndarray, np.ndarray]:
        if self._d is None or self._labels_at != len(self.tree):
            self._d = self.tree.dfs[self.vers]
            self._h = self.tree.hi[self.vers]
            self._labels_at = len(self.tree)
        return self._d, self._h

    def live_at(self, v: int) -> int:
        if v < 0:
            return 0
        if v >= self.live.shape[0]:
            # cloned after these stats were built: a fresh leaf sees its parent
            return self.live_at(self.tree.parent[v])
        return int(self.live[v])

    def parent_of_set(self) -> int:
        """Common parent of the orphans (-1 for the root); raises if not a stratum."""
        ps = {self.tree.parent[o] for o in self.orphans}
        if len(ps) != 1:
            raise NotAStratum(f"orphans {self.orphans} are not siblings")
        return ps.pop()

    def subtree(self, v: int) -> list[int]:
        out = [v]
        stack = list(self.vchildren.get(v, ()))
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(self.vchildren.get(u, ()))
        return out

    def split_idx(self, versions: Iterable[int]) -> np.ndarray:
        """Indices of rows live at some version of the given set, in kv order."""
        d, h = self._dh()
        ids = np.fromiter(versions, dtype=np.int64)
        labs = np.sort(self.tree.dfs[ids])
        return kernels.select(self.fparent, d, h, labs)

    def split_mask(self, versions: Iterable[int]) -> np.ndarray:
        mask = np.zeros(self.n, dtype=np.bool_)
        mask[self.split_idx(versions)] = True
        return mask

    def split_size(self, versions: Iterable[int]) -> int:
        return int(self.split_idx(versions).shape[0])

    def delta_t(self, v: int) -> Fraction:
        lam = int(self.lam_t[v])
        if lam == 0:
            return Fraction(1)
        return Fraction(int(self.live[v]), lam)


def version_forest(tree: VersionTree, versions: Iterable[int]):
    """Sort a version set by DFS label and link each member to its nearest member ancestor."""
    vs = np.fromiter(versions, dtype=np.int64)
    if vs.size == 1:
        return vs, {}, {}, [int(vs[0])]
    vs = vs[np.argsort(tree.dfs[vs], kind="stable")]
    vparent: dict[int, int] = {}
    vchildren: dict[int, list[int]] = {}
    orphans: list[int] = []
    stack: list[int] = []
    hi = tree.hi
    for v in vs.tolist():
        dv = tree.dfs[v]
        while stack and hi[stack[-1]] < dv:
            stack.pop()
        if stack:
            p = stack[-1]
            vparent[v] = p
            vchildren.setdefault(p, []).append(v)
        else:
            orphans.append(v)
        stack.append(v)
    return vs, vparent, vchildren, orphans


def compute_stats(keys: np.ndarray, vers: np.ndarray, versions: Iterable[int], tree: VersionTree,
                  fparent: np.ndarray | None = None) -> VersionStats:
    keys = np.asarray(keys, dtype=np.int64)
    vers = np.asarray(vers, dtype=np.int64)
    vs, vparent, vchildren, orphans = version_forest(tree, versions)
    if vs.size == 0:
        raise ValueError("version set is empty")
    nv = len(tree)
    in_v = np.zeros(nv, dtype=np.bool_)
    in_v[vs] = True
    empty = np.zeros(0, dtype=np.int64)
    ok, fparent, live, rowcount, lead, lead_below, lam_t = kernels.stats(
        keys, vers, tree.dfs, tree.hi, in_v, empty if fparent is None else fparent)
    if not ok:
        raise ValueError("entries are not in kv order")
    return VersionStats(tree, keys, vers, vs, rowcount, live, lead, lead_below, lam_t, fparent,
                        vparent, vchildren, orphans)


def density(stats: VersionStats, v: int, array_len: int) -> Fraction:
    if array_len <= 0:
        raise ValueError("density of an empty array")
    return Fraction(stats.live_at(v), array_len)


def is_dense(stats: VersionStats, v: int, array_len: int) -> bool:
    return density(stats, v, array_len) >= DENSE


def split_extract(keys, vers, versions, tree: VersionTree) -> np.ndarray:
    """Indices of the entries live at some version of ``versions`` (kv order kept)."""
    versions = list(versions)
    if not versions:
        raise ValueError("empty version set")
    keys = np.asarray(keys, dtype=np.int64)
    vers = np.asarray(vers, dtype=np.int64)
    d = tree.dfs[vers]
    check_sorted(keys, d)
    h = tree.hi[vers]
    fparent = kernels.forest(keys, d, h)
    nv = len(tree)
    mark = np.zeros(nv, dtype=np.int64)
    mark[tree.dfs[np.asarray(versions, dtype=np.int64)]] = 1
    pre = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(mark, out=pre[1:])
    return np.flatnonzero(kernels.omega(fparent, d, h, pre))


def arr_size(stats: VersionStats, versions: Iterable[int]) -> int:
    """live(parent) + lead over the set; upper bound on the split size of a stratum."""
    ws = list(versions)
    _, _, _, orphans = version_forest(stats.tree, ws)
    parents = {stats.tree.parent[o] for o in orphans}
    if len(parents) != 1:
        raise NotAStratum("version set is not a stratum")
    p = parents.pop()
    return stats.live_at(p) + int(stats.rowcount[np.asarray(ws, dtype=np.int64)].sum())
