"""Copy-on-write B-tree: one root per version, path copying on first write.

Nodes live on the same :class:`~sda.store.BlockDevice` cost model as the SDA,
one node per block, so the fan-out is the device block size. Each node records
the version that owns it; a version only modifies nodes it owns and copies the
rest. Versions with no root of their own read through the nearest ancestor
that has one, which makes clone free.

With ``cache_nodes=0`` every node visit is a read and every modified node a
write. Otherwise an LRU write-back cache of that many nodes sits in front of
the device: misses cost a read, evicting a dirty node costs a write, and
:meth:`CowBTree.flush` writes back whatever is still dirty.
"""
from __future__ import annotations

import bisect
from collections import OrderedDict

from ..store import BlockDevice
from ..versions import VersionTree


class _Node:
    __slots__ = ("keys", "vals", "kids", "owner")

    def __init__(self, keys, vals, kids, owner):
        self.keys = keys      # leaf: entry keys; internal: separators
        self.vals = vals      # leaf only: (value, writing version)
        self.kids = kids      # internal only: child node ids
        self.owner = owner

    @property
    def leaf(self) -> bool:
        return self.kids is None


class CowBTree:
    name = "cow-btree"

    def __init__(self, tree: VersionTree | None = None, device: BlockDevice | None = None,
                 cache_nodes: int = 0):
        self.tree = tree if tree is not None else VersionTree()
        self.device = device if device is not None else BlockDevice()
        if cache_nodes < 0:
            raise ValueError("cache_nodes must be >= 0")
        self.fanout = max(4, self.device.B)
        self.cache_nodes = cache_nodes
        self.nodes: dict[int, _Node] = {}
        self.roots: dict[int, int] = {}
        self._next = 0
        self._cache: OrderedDict[int, bool] = OrderedDict()  # node id -> dirty
        self.height = 0

    # ------------------------------------------------------------ node I/O
    def _touch(self, nid: int, dirty: bool) -> None:
        c = self._cache
        if nid in c:
            c.move_to_end(nid)
            if dirty:
                c[nid] = True
            return
        if not dirty:
            self.device.charge_reads(1)
        c[nid] = dirty
        if len(c) > self.cache_nodes:
            _, was_dirty = c.popitem(last=False)
            if was_dirty:
                self.device.charge_writes(1)

    def _read(self, nid: int) -> _Node:
        if self.cache_nodes == 0:
            self.device.charge_reads(1)
        else:
            self._touch(nid, False)
        return self.nodes[nid]

    def _write(self, nid: int) -> None:
        if self.cache_nodes == 0:
            self.device.charge_writes(1)
        else:
            self._touch(nid, True)

    def _alloc(self, node: _Node) -> int:
        nid = self._next
        self._next += 1
        self.nodes[nid] = node
        self.device.live_entries += self.fanout
        self.device.total_entries_ever += self.fanout
        return nid

    def _own(self, nid: int, v: int) -> int:
        """Id of a node owned by ``v`` with the contents of ``nid`` (a copy if needed)."""
        node = self.nodes[nid]
        if node.owner == v:
            return nid
        kids = None if node.kids is None else list(node.kids)
        vals = None if node.vals is None else list(node.vals)
        return self._alloc(_Node(list(node.keys), vals, kids, v))

    def flush(self) -> int:
        """Write back dirty cached nodes; returns the number written."""
        n = 0
        for nid, dirty in self._cache.items():
            if dirty:
                self._cache[nid] = False
                n += 1
        self.device.charge_writes(n)
        return n

    # ------------------------------------------------------------ versions
    def effective_root(self, version: int) -> int | None:
        v = version
        while v != -1:
            r = self.roots.get(v)
            if r is not None:
                return r
            v = self.tree.parent[v]
        return None

    def clone(self, parent: int) -> int:
        return self.tree.clone(parent)

    def clone_register(self, parent: int, child: int) -> None:
        """Nothing to do: the child reads through its parent's root until it writes."""

    # ------------------------------------------------------------ update
    def update(self, key: int, value: int, version: int) -> None:
        if not self.tree.is_leaf(version):
            raise ValueError(f"version {version} is not a leaf")
        self.cow_update(key, value, version)

    def cow_update(self, key: int, value: int, v: int) -> None:
        rid = self.effective_root(v)
        if rid is None:
            nid = self._alloc(_Node([key], [(value, v)], None, v))
            self._write(nid)
            self.roots[v] = nid
            self.height = max(self.height, 1)
            return
        path: list[tuple[int, int]] = []  # (node id, child slot taken)
        nid = rid
        node = self._read(nid)
        while not node.leaf:
            i = bisect.bisect_right(node.keys, key)
            path.append((nid, i))
            nid = node.kids[i]
            node = self._read(nid)

        depth = len(path) + 1
        old = nid
        nid = self._own(nid, v)
        leaf = self.nodes[nid]
        i = bisect.bisect_left(leaf.keys, key)
        if i < len(leaf.keys) and leaf.keys[i] == key:
            leaf.vals[i] = (value, v)
        else:
            leaf.keys.insert(i, key)
            leaf.vals.insert(i, (value, v))
        self._write(nid)
        split = self._split(nid, v)
        changed = nid != old

        while path and (changed or split is not None):
            pid, slot = path.pop()
            old = pid
            pid = self._own(pid, v)
            parent = self.nodes[pid]
            parent.kids[slot] = nid
            if split is not None:
                sep, right = split
                parent.keys.insert(slot, sep)
                parent.kids.insert(slot + 1, right)
            self._write(pid)
            split = self._split(pid, v)
            changed = pid != old
            nid = pid

        self.height = max(self.height, depth)
        if path:
            # the untouched upper part of the path is unchanged
            return
        if split is not None:
            sep, right = split
            newroot = self._alloc(_Node([sep], None, [nid, right], v))
            self._write(newroot)
            nid = newroot
            depth += 1
        self.roots[v] = nid
        self.height = max(self.height, depth)

    def _split(self, nid: int, v: int):
        node = self.nodes[nid]
        if node.leaf:
            if len(node.keys) <= self.fanout:
                return None
            m = len(node.keys) // 2
            right = _Node(node.keys[m:], node.vals[m:], None, v)
            del node.keys[m:], node.vals[m:]
            rid = self._alloc(right)
            self._write(rid)
            return right.keys[0], rid
        if len(node.kids) <= self.fanout:
            return None
        m = len(node.keys) // 2
        sep = node.keys[m]
        right = _Node(node.keys[m + 1:], None, node.kids[m + 1:], v)
        del node.keys[m:], node.kids[m + 1:]
        rid = self._alloc(right)
        self._write(rid)
        return sep, rid

    # ------------------------------------------------------------ queries
    def point_query(self, key: int, version: int):
        self.tree._check(version)
        nid = self.effective_root(version)
        if nid is None:
            return None
        node = self._read(nid)
        while not node.leaf:
            node = self._read(node.kids[bisect.bisect_right(node.keys, key)])
        i = bisect.bisect_left(node.keys, key)
        if i < len(node.keys) and node.keys[i] == key:
            return node.vals[i]
        return None

    def range_query(self, start: int, end: int, version: int) -> list[tuple[int, int]]:
        if start > end:
            raise ValueError("start_key > end_key")
        self.tree._check(version)
        rid = self.effective_root(version)
        out: list[tuple[int, int]] = []
        if rid is None:
            return out
        stack = [rid]
        while stack:
            node = self._read(stack.pop())
            if node.leaf:
                lo = bisect.bisect_left(node.keys, start)
                hi = bisect.bisect_right(node.keys, end)
                out.extend((node.keys[i], node.vals[i][0]) for i in range(lo, hi))
            else:
                lo = bisect.bisect_right(node.keys, start)
                hi = bisect.bisect_right(node.keys, end)
                stack.extend(reversed(node.kids[lo:hi + 1]))
        return out

    # ------------------------------------------------------------ reporting
    def space_entries(self) -> int:
        return len(self.nodes) * self.fanout

    def n_arrays(self) -> int:
        return len(self.nodes)

    def snapshot(self) -> dict:
        out = {"versions": len(self.tree), "nodes": len(self.nodes), "height": self.height,
               "roots": len(self.roots), "cache_nodes": self.cache_nodes}
        out.update(self.device.io_counters()._asdict())
        return out

    def stats_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.snapshot().items())
