"""Version tree with DFS interval labels.

Version ids are stable integers handed out in creation order; DFS labels are
recomputed after every clone. Children are visited in creation order, so a
clone only shifts labels and never changes the relative preorder of existing
versions -- arrays sorted under old labels stay sorted.
"""
from __future__ import annotations

import numpy as np


class VersionError(KeyError):
    pass


class VersionTree:
    def __init__(self, create_root: bool = True):
        self.parent: list[int] = []
        self.children: list[list[int]] = []
        self.dfs = np.zeros(0, dtype=np.int64)
        self.hi = np.zeros(0, dtype=np.int64)
        self.order = np.zeros(0, dtype=np.int64)  # label -> id
        self.depth = np.zeros(0, dtype=np.int64)
        if create_root:
            self.create_root()

    def __len__(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        if not self.parent:
            raise VersionError("tree is empty")
        return 0

    def create_root(self) -> int:
        if self.parent:
            raise ValueError("version tree already initialized")
        self.parent.append(-1)
        self.children.append([])
        self._relabel()
        return 0

    def clone(self, parent: int) -> int:
        self._check(parent)
        vid = len(self.parent)
        self.parent.append(parent)
        self.children.append([])
        self.children[parent].append(vid)
        self._relabel()
        return vid

    def _relabel(self) -> None:
        n = len(self.parent)
        dfs = np.empty(n, dtype=np.int64)
        hi = np.empty(n, dtype=np.int64)
        depth = np.empty(n, dtype=np.int64)
        order = np.empty(n, dtype=np.int64)
        label = 0
        depth[0] = 0
        stack = [(0, False)]
        while stack:
            v, done = stack.pop()
            if done:
                hi[v] = label - 1
                continue
            dfs[v] = label
            order[label] = v
            label += 1
            stack.append((v, True))
            for c in reversed(self.children[v]):
                depth[c] = depth[v] + 1
                stack.append((c, False))
        self.dfs, self.hi, self.depth, self.order = dfs, hi, depth, order

    def _check(self, v: int) -> None:
        if not 0 <= v < len(self.parent):
            raise VersionError(f"unknown version {v}")

    def exists(self, v: int) -> bool:
        return 0 <= v < len(self.parent)

    def is_leaf(self, v: int) -> bool:
        self._check(v)
        return not self.children[v]

    def interval(self, v: int) -> tuple[int, int]:
        self._check(v)
        return int(self.dfs[v]), int(self.hi[v])

    def is_ancestor(self, x: int, y: int) -> bool:
        """Weak ancestorship: True iff x is y or an ancestor of y."""
        self._check(x)
        self._check(y)
        return bool(self.dfs[x] <= self.dfs[y] <= self.hi[x])

    def kv_compare(self, a: tuple[int, int], b: tuple[int, int]) -> int:
        """Order (key, version) pairs by key, then by DFS label descending."""
        (ka, va), (kb, vb) = a, b
        self._check(va)
        self._check(vb)
        if ka != kb:
            return -1 if ka < kb else 1
        da, db = self.dfs[va], self.dfs[vb]
        if da == db:
            return 0
        return -1 if da > db else 1

    def leaves(self) -> list[int]:
        return [v for v in range(len(self.parent)) if not self.children[v]]

    def internal(self) -> list[int]:
        return [v for v in range(len(self.parent)) if self.children[v]]

    def path_to_root(self, v: int) -> list[int]:
        self._check(v)
        out = []
        while v != -1:
            out.append(v)
            v = self.parent[v]
        return out

    def dump(self) -> str:
        lines = []
        for label in range(len(self.parent)):
            v = int(self.order[label])
            lines.append(f"{'  ' * int(self.depth[v])}{v} [{self.dfs[v]},{self.hi[v]}]")
        return "\n".join(lines)
