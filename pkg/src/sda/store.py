"""Simulated block device holding immutable kv-sorted arrays.

The device is the only component that knows the block size. Costs:

* writing n rows sequentially costs ceil(n/B) block writes;
* a binary-search probe costs one read unless it lands in the block of the
  previous probe;
* scanning rows [a, b) costs the number of distinct blocks in that span.

Arrays with fewer than ``memory_entries`` rows are treated as resident in the
memory buffer and cost nothing (default 0: everything is charged).
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import kernels
from .versions import VersionTree

VALUE, FP, SLOT = 0, 1, 2
DATA, SAMPLE = "data", "sample"
KIND_CODE = {DATA: 0, SAMPLE: 1}
MAGIC = b"SDA1"
HEADER = struct.Struct("<4sIIIB")
SIGN = np.uint64(1 << 63)
HEADER_SIZE = 32  # 17 meaningful bytes padded to a 16-byte multiple


class StoreError(RuntimeError):
    pass


class IOCounters(NamedTuple):
    reads: int
    writes: int
    bytes_read: int
    bytes_written: int
    live_entries: int
    total_entries_ever: int


@dataclass(eq=False)
class StoredArray:
    array_id: int
    level: int
    keys: np.ndarray
    vers: np.ndarray
    tags: np.ndarray
    pay: np.ndarray
    pay2: np.ndarray | None       # right-hand FP target of SLOT rows; None when there are no slots
    versions: set
    next_array: int | None
    kind: str
    state: str = "alive"
    stats: object = None
    _vidx: np.ndarray | None = None
    _entry_versions: frozenset | None = None
    size: int = 0

    def __post_init__(self):
        self.size = int(self.keys.shape[0])

    def __len__(self) -> int:
        return self.size

    @property
    def has_fp(self) -> bool:
        return self.next_array is not None

    @property
    def value_idx(self) -> np.ndarray:
        if self._vidx is None:
            self._vidx = np.flatnonzero(self.tags == VALUE)
        return self._vidx

    @property
    def n_values(self) -> int:
        if self.kind == DATA and self.next_array is None:
            return int(self.keys.shape[0])
        return int(self.value_idx.shape[0])

    def value_columns(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.kind == DATA and self.next_array is None:
            return self.keys, self.vers, self.pay
        i = self.value_idx
        return self.keys[i], self.vers[i], self.pay[i]

    def entry_versions(self) -> frozenset:
        if self._entry_versions is None:
            self._entry_versions = frozenset(np.unique(self.vers[self.value_idx]).tolist())
        return self._entry_versions


class BlockDevice:
    def __init__(self, block_size: int = 64, memory_entries: int = 0, path: str | None = None,
                 key_size: int = 16, value_size: int = 84):
        if block_size < 1:
            raise ValueError("block size must be positive")
        if key_size < 8 or value_size < 16:
            raise ValueError("key_size must be >= 8 and value_size >= 16")
        self.B = block_size
        self.memory_entries = memory_entries
        self.path = path
        self.key_size = key_size
        self.value_size = value_size
        self.record_size = key_size + 9 + value_size
        self.arrays: dict[int, StoredArray] = {}
        self._next_id = 0
        self._freed: set[int] = set()
        self.reads = self.writes = 0
        self.bytes_read = self.bytes_written = 0
        self.live_entries = 0
        self.total_entries_ever = 0
        self._held_array: int | None = None    # blocks fetched by the current lookup step
        self._held: set[int] = set()
        if path:
            os.makedirs(path, exist_ok=True)

    # ------------------------------------------------------------ accounting
    def _resident(self, n: int) -> bool:
        return n < self.memory_entries

    def blocks(self, n: int) -> int:
        return 0 if n <= 0 or self._resident(n) else -(-n // self.B)

    def charge_span(self, arr: StoredArray, start: int, stop: int) -> int:
        """Charge a sequential read of rows [start, stop).

        Blocks already fetched since the last search in the same array are free.
        """
        if stop <= start or arr.size < self.memory_entries:
            return 0
        b0, b1 = start // self.B, (stop - 1) // self.B
        if arr.array_id == self._held_array:
            held = self._held
            b = 0
            for x in range(b0, b1 + 1):
                if x not in held:
                    held.add(x)
                    b += 1
        else:
            b = b1 - b0 + 1
        self.reads += b
        self.bytes_read += b * self.B * self.record_size
        return b

    def charge_reads(self, n_blocks: int) -> None:
        self.reads += n_blocks
        self.bytes_read += n_blocks * self.B * self.record_size

    def charge_writes(self, n_blocks: int) -> None:
        self.writes += n_blocks
        self.bytes_written += n_blocks * self.B * self.record_size

    def read_all(self, arr: StoredArray) -> int:
        b = self.blocks(len(arr))
        self.charge_reads(b)
        return b

    def io_counters(self) -> IOCounters:
        return IOCounters(self.reads, self.writes, self.bytes_read, self.bytes_written,
                          self.live_entries, self.total_entries_ever)

    # ------------------------------------------------------------ arrays
    def write_array(self, keys, vers, tags, pay, versions, level: int, next_array: int | None,
                    kind: str, tree: VersionTree, pay2=None, charge: bool = True,
                    validate: bool = True) -> StoredArray:
        keys = np.ascontiguousarray(keys, dtype=np.int64)
        n = keys.shape[0]
        if n == 0:
            raise StoreError("refusing to write an empty array")
        vers = np.ascontiguousarray(vers, dtype=np.int64)
        tags = np.ascontiguousarray(tags, dtype=np.uint8)
        pay = np.ascontiguousarray(pay, dtype=np.int64)
        if pay2 is not None:
            pay2 = np.ascontiguousarray(pay2, dtype=np.int64)
        elif kind == DATA and next_array is not None:
            pay2 = np.full(n, -1, dtype=np.int64)
        if validate:
            self._validate(keys, vers, tags, pay, next_array, tree)
        aid = self._next_id
        self._next_id += 1
        arr = StoredArray(aid, level, keys, vers, tags, pay, pay2, set(versions), next_array, kind)
        self.arrays[aid] = arr
        self.live_entries += n
        self.total_entries_ever += n
        if charge:
            b = self.blocks(n)
            self.writes += b
            self.bytes_written += b * self.B * self.record_size
        if self.path:
            with open(os.path.join(self.path, f"{aid:08d}.sda"), "wb") as fh:
                fh.write(encode_array(arr, tree, self.key_size, self.value_size))
        return arr

    def _validate(self, keys, vers, tags, pay, next_array, tree) -> None:
        if keys.shape[0] > 1:
            dk = np.diff(keys)
            dd = np.diff(tree.dfs[vers])
            if ((dk < 0) | ((dk == 0) & (dd > 0))).any():
                raise StoreError("rows are not in kv order")
        fp = tags == FP
        if fp.any():
            if next_array is None or next_array not in self.arrays:
                raise StoreError("forward pointers without a next array")
            lim = len(self.arrays[next_array])
            p = pay[fp]
            if p.min() < 0 or p.max() >= lim:
                raise StoreError("forward pointer out of range of next array")

    def get(self, aid: int) -> StoredArray:
        try:
            return self.arrays[aid]
        except KeyError:
            raise StoreError(f"no such array {aid}") from None

    def is_alive(self, aid: int | None) -> bool:
        return aid is not None and aid in self.arrays and self.arrays[aid].state == "alive"

    def mark_dead(self, aid: int) -> None:
        self.get(aid).state = "dead"

    def free_array(self, aid: int) -> None:
        if aid in self._freed:
            raise StoreError(f"array {aid} already freed")
        arr = self.get(aid)
        if arr.state != "dead":
            raise StoreError(f"array {aid} is still alive")
        del self.arrays[aid]
        self._freed.add(aid)
        if aid == self._held_array:
            self._held_array = None
        self.live_entries -= len(arr)
        if self.path:
            try:
                os.remove(os.path.join(self.path, f"{aid:08d}.sda"))
            except FileNotFoundError:
                pass

    # ------------------------------------------------------------ access
    def search(self, arr: StoredArray, key: int, version: int, tree: VersionTree,
               lb: int | None = None, ub: int | None = None):
        """Least upper bound of (key, version) plus the nearest FP targets either side.

        ``ub`` is inclusive and may equal len(arr) (one past the end).
        """
        n = arr.size
        if lb is None and ub is None:
            lo, hi = 0, n
        else:
            lo = 0 if lb is None else lb
            hi = n if ub is None else ub
            if not (0 <= lo <= n and 0 <= hi <= n and lo <= hi):
                raise StoreError(f"invalid search bounds [{lb}, {ub}] for array of {n}")
        loc, probes, last = kernels.search(arr.keys, arr.vers, tree.dfs, key, int(tree.dfs[version]), lo, hi,
                                           self.B)
        loc = int(loc)
        self._held_array = arr.array_id
        self._held = {int(last)} if probes else set()
        if n >= self.memory_entries:
            probes = int(probes)
            self.reads += probes
            self.bytes_read += probes * self.B * self.record_size
        below = above = None
        if arr.has_fp:
            below, above = self._fp_hints(arr, loc)
        return loc, below, above

    def _fp_hints(self, arr: StoredArray, loc: int):
        tags, pay, pay2 = arr.tags, arr.pay, arr.pay2
        n = len(arr)
        below = above = None
        got_below = got_above = False
        i = loc - 1
        while i >= 0:
            t = tags[i]
            if t == FP:
                below, got_below = int(pay[i]), True
                break
            if t == SLOT:
                below, got_below = _opt(pay[i]), True
                above, got_above = _opt(pay2[i]), True
                break
            i -= 1
        self.charge_span(arr, max(i, 0), loc)
        if not got_above:
            j = loc
            while j < n:
                t = tags[j]
                if t == FP:
                    above = int(pay[j])
                    break
                if t == SLOT:
                    if not got_below:
                        below = _opt(pay[j])
                    above = _opt(pay2[j])
                    break
                j += 1
            self.charge_span(arr, loc, min(j + 1, n))
        return below, above

    def iterate(self, arr: StoredArray, loc: int) -> Iterator[tuple[int, int, int, int]]:
        n = len(arr)
        if not 0 <= loc <= n:
            raise StoreError(f"iterator start {loc} out of range")
        return self._iter(arr, loc)

    def _iter(self, arr, loc):
        block = -1
        for i in range(loc, len(arr)):
            b = i // self.B
            if b != block:
                block = b
                self.charge_span(arr, i, i + 1)
            yield int(arr.keys[i]), int(arr.vers[i]), int(arr.tags[i]), int(arr.pay[i])


def _opt(x) -> int | None:
    return None if x < 0 else int(x)


# ---------------------------------------------------------------- file format

def encode_array(arr: StoredArray, tree: VersionTree, key_size: int = 16, value_size: int = 84) -> bytes:
    n = len(arr)
    header = HEADER.pack(MAGIC, n, key_size, value_size, KIND_CODE[arr.kind]).ljust(HEADER_SIZE, b"\0")
    rec = np.zeros((n, key_size + 9 + value_size), dtype=np.uint8)
    # offset binary keeps byte order equal to signed key order
    kb = (arr.keys.view(np.uint64) ^ SIGN).astype(">u8").view(np.uint8).reshape(n, 8)
    rec[:, key_size - 8:key_size] = kb
    rec[:, key_size:key_size + 8] = tree.dfs[arr.vers].astype("<u8").view(np.uint8).reshape(n, 8)
    rec[:, key_size + 8] = arr.tags
    off = key_size + 9
    rec[:, off:off + 8] = arr.pay.astype("<i8").view(np.uint8).reshape(n, 8)
    pay2 = arr.pay2 if arr.pay2 is not None else np.full(n, -1, dtype=np.int64)
    rec[:, off + 8:off + 16] = pay2.astype("<i8").view(np.uint8).reshape(n, 8)
    slots = arr.tags != SLOT
    rec[slots, off + 8:off + 16] = 0
    return header + rec.tobytes()


def decode_array(buf: bytes) -> dict:
    magic, n, key_size, value_size, kind = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise StoreError("bad magic")
    width = key_size + 9 + value_size
    rec = np.frombuffer(buf, dtype=np.uint8, offset=HEADER_SIZE, count=n * width).reshape(n, width)
    keys = (rec[:, key_size - 8:key_size].copy().view(">u8").reshape(n).astype(np.uint64) ^ SIGN).view(np.int64)
    dfs = rec[:, key_size:key_size + 8].copy().view("<u8").reshape(n).astype(np.int64)
    tags = rec[:, key_size + 8].copy()
    off = key_size + 9
    pay = rec[:, off:off + 8].copy().view("<i8").reshape(n)
    pay2 = rec[:, off + 8:off + 16].copy().view("<i8").reshape(n)
    return {"kind": "data" if kind == 0 else "sample", "key_size": key_size, "value_size": value_size,
            "keys": keys, "dfs": dfs, "tags": tags, "pay": pay, "pay2": pay2}
