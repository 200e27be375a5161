"""Brute-force versioned dictionary: the correctness reference.

Ancestry is decided by walking parent links, never by DFS labels, so it shares
no machinery with the structures it checks.
"""
from __future__ import annotations

import bisect

from ..versions import VersionTree


class OracleStore:
    name = "oracle"

    def __init__(self, tree: VersionTree | None = None):
        self.tree = tree if tree is not None else VersionTree()
        self.history: dict[int, list[tuple[int, int]]] = {}
        self._sorted_keys: list[int] = []

    def update(self, key: int, value: int, version: int) -> None:
        if not self.tree.is_leaf(version):
            raise ValueError(f"version {version} is not a leaf")
        if key not in self.history:
            self.history[key] = []
            bisect.insort(self._sorted_keys, key)
        self.history[key].append((version, value))

    def clone(self, parent: int) -> int:
        return self.tree.clone(parent)

    def _depth_on_path(self, version: int) -> dict[int, int]:
        path = []
        v = version
        while v != -1:
            path.append(v)
            v = self.tree.parent[v]
        return {u: len(path) - i for i, u in enumerate(path)}

    def _resolve(self, key: int, path: dict[int, int]):
        best = None
        for ver, val in self.history.get(key, ()):
            d = path.get(ver)
            # later writes at the same version replace earlier ones
            if d is not None and (best is None or d >= best[0]):
                best = (d, val, ver)
        return best

    def point_query(self, key: int, version: int):
        self.tree._check(version)
        best = self._resolve(key, self._depth_on_path(version))
        return None if best is None else (best[1], best[2])

    def range_query(self, start: int, end: int, version: int) -> list[tuple[int, int]]:
        if start > end:
            raise ValueError("start_key > end_key")
        self.tree._check(version)
        path = self._depth_on_path(version)
        keys = self._sorted_keys
        out = []
        for k in keys[bisect.bisect_left(keys, start):bisect.bisect_right(keys, end)]:
            # same rule as _resolve, inlined: depths are >= 1
            best, val = 0, None
            for ver, x in self.history[k]:
                d = path.get(ver, 0)
                if d and d >= best:
                    best, val = d, x
            if best:
                out.append((k, val))
        return out

    def live_keys(self, version: int) -> list[int]:
        path = self._depth_on_path(version)
        return [k for k in self._sorted_keys if self._resolve(k, path) is not None]
