import os
import random

import numpy as np
import pytest

from sda.store import (DATA, FP, HEADER_SIZE, SAMPLE, VALUE, BlockDevice, StoreError, decode_array,
                       encode_array)
from sda.versions import VersionTree


def put(dev, tree, keys, vers=None, level=0, next_array=None, kind=DATA, tags=None, pay=None):
    keys = np.asarray(keys, dtype=np.int64)
    n = keys.shape[0]
    vers = np.zeros(n, dtype=np.int64) if vers is None else np.asarray(vers)
    tags = np.full(n, VALUE, dtype=np.uint8) if tags is None else np.asarray(tags)
    pay = np.arange(n) if pay is None else np.asarray(pay)
    return dev.write_array(keys, vers, tags, pay, {0}, level, next_array, kind, tree)


@pytest.fixture
def tree():
    return VersionTree()


def test_fresh_counters_zero():
    assert all(x == 0 for x in BlockDevice().io_counters())


@pytest.mark.parametrize("n,blocks", [(1, 1), (64, 1), (65, 2), (130, 3)])
def test_write_cost(tree, n, blocks):
    dev = BlockDevice(block_size=64)
    put(dev, tree, range(n))
    c = dev.io_counters()
    assert c.writes == blocks and c.live_entries == n and c.total_entries_ever == n
    assert c.bytes_written == blocks * 64 * dev.record_size


def test_write_rejects_bad_input(tree):
    dev = BlockDevice()
    with pytest.raises(StoreError):
        put(dev, tree, [])
    with pytest.raises(StoreError):
        put(dev, tree, [3, 1])
    c = tree.clone(0)
    with pytest.raises(StoreError):  # ancestor before descendant within a key
        put(dev, tree, [1, 1], vers=[0, c])
    with pytest.raises(StoreError):  # FP without a next array
        put(dev, tree, [1], tags=[FP], pay=[0])
    target = put(dev, tree, [1, 2])
    with pytest.raises(StoreError):
        put(dev, tree, [1], tags=[FP], pay=[2], next_array=target.array_id, kind=SAMPLE)
    ok = put(dev, tree, [1], tags=[FP], pay=[1], next_array=target.array_id, kind=SAMPLE)
    assert ok.n_values == 0


def test_search_positions(tree):
    dev = BlockDevice(block_size=4)
    a = put(dev, tree, [2, 4, 6, 8, 10])
    assert dev.search(a, 6, 0, tree)[0] == 2
    assert dev.search(a, 5, 0, tree)[0] == 2
    loc, below, above = dev.search(a, 11, 0, tree)
    assert loc == 5 and below is None and above is None
    with pytest.raises(StoreError):
        dev.search(a, 1, 0, tree, lb=3, ub=2)
    with pytest.raises(StoreError):
        dev.search(a, 1, 0, tree, ub=9)


def test_bracketed_search_is_cheap(tree):
    dev = BlockDevice(block_size=16)
    a = put(dev, tree, range(0, 20000, 2))
    r0 = dev.reads
    loc = dev.search(a, 5000, 0, tree, lb=2496, ub=2510)[0]
    assert loc == 2500 and dev.reads - r0 <= 2
    r1 = dev.reads
    dev.search(a, 5000, 0, tree)
    assert dev.reads - r1 > 2


def test_search_probe_charges_brute(tree):
    # shadow binary search: one read per probe unless it repeats the previous block
    rng = random.Random(1)
    B = 8
    dev = BlockDevice(block_size=B)
    keys = sorted(rng.sample(range(10**6), 3000))
    a = put(dev, tree, keys)
    for _ in range(200):
        k = rng.randrange(10**6)
        lo, hi = 0, len(keys)
        last, cost = -1, 0
        while lo < hi:
            mid = (lo + hi) // 2
            if mid // B != last:
                cost += 1
                last = mid // B
            if keys[mid] < k:
                lo = mid + 1
            else:
                hi = mid
        r0 = dev.reads
        assert dev.search(a, k, 0, tree)[0] == lo
        assert dev.reads - r0 == cost


def test_iterate_costs(tree):
    dev = BlockDevice(block_size=4)
    a = put(dev, tree, range(10))
    r0 = dev.reads
    assert [e[0] for e in dev.iterate(a, 0)] == list(range(10))
    assert dev.reads - r0 == 3
    assert list(dev.iterate(a, 10)) == []
    r1 = dev.reads
    next(dev.iterate(a, 5))
    assert dev.reads - r1 == 1
    with pytest.raises(StoreError):
        dev.iterate(a, 11)


def test_free_accounting(tree):
    dev = BlockDevice()
    a = put(dev, tree, range(7))
    put(dev, tree, range(3))
    with pytest.raises(StoreError):
        dev.free_array(a.array_id)
    dev.mark_dead(a.array_id)
    dev.free_array(a.array_id)
    c = dev.io_counters()
    assert c.live_entries == 3 and c.total_entries_ever == 10
    with pytest.raises(StoreError):
        dev.free_array(a.array_id)


def test_counters_monotone(tree):
    rng = random.Random(0)
    dev = BlockDevice(block_size=4)
    arrs = []
    prev = dev.io_counters()
    for _ in range(100):
        op = rng.random()
        if op < 0.4 or not arrs:
            arrs.append(put(dev, tree, sorted(rng.sample(range(1000), rng.randint(1, 40)))))
        elif op < 0.8:
            a = rng.choice(arrs)
            dev.search(a, rng.randrange(1000), 0, tree)
        else:
            a = rng.choice(arrs)
            list(dev.iterate(a, rng.randint(0, len(a))))
        c = dev.io_counters()
        for f in ("reads", "writes", "bytes_read", "bytes_written", "total_entries_ever"):
            assert getattr(c, f) >= getattr(prev, f)
        prev = c


def test_lookup_step_reads_each_block_once(tree):
    dev = BlockDevice(block_size=64)
    target = put(dev, tree, range(100))
    tags = np.where(np.arange(40) % 7 == 3, FP, VALUE).astype(np.uint8)
    a = put(dev, tree, range(0, 80, 2), tags=tags, pay=np.arange(40), next_array=target.array_id)
    r0 = dev.reads
    loc, below, above = dev.search(a, 41, 0, tree)
    dev.charge_span(a, loc, loc + 3)
    list(dev.iterate(a, loc))
    assert dev.reads - r0 == 1      # everything sits in the first block
    dev.search(a, 41, 0, tree)
    assert dev.reads - r0 == 2      # a fresh search pays again
    dev.read_all(a)
    assert dev.reads - r0 == 3      # a full pass is never discounted


def test_memory_resident_arrays_are_free(tree):
    dev = BlockDevice(block_size=4, memory_entries=8)
    a = put(dev, tree, range(5))
    dev.search(a, 3, 0, tree)
    list(dev.iterate(a, 0))
    assert dev.reads == dev.writes == 0
    put(dev, tree, range(8))
    assert dev.writes == 2


def test_file_format_round_trip(tmp_path, tree):
    c = tree.clone(0)
    dev = BlockDevice(block_size=4, path=str(tmp_path), key_size=16, value_size=84)
    keys = np.array([-(2**63), -5, -5, 0, 7, 2**63 - 1], dtype=np.int64)
    vers = np.array([0, c, 0, 0, c, 0])
    a = dev.write_array(keys, vers, np.zeros(6, np.uint8), np.arange(6) * 11, {0, c}, 0, None, DATA, tree)
    path = tmp_path / f"{a.array_id:08d}.sda"
    buf = path.read_bytes()
    assert buf[:4] == b"SDA1"
    assert len(buf) == HEADER_SIZE + 6 * (16 + 9 + 84)
    assert int.from_bytes(buf[4:8], "little") == 6
    assert int.from_bytes(buf[8:12], "little") == 16
    assert int.from_bytes(buf[12:16], "little") == 84
    assert buf[16] == 0
    d = decode_array(buf)
    assert d["keys"].tolist() == keys.tolist()
    assert d["dfs"].tolist() == tree.dfs[vers].tolist()
    assert d["pay"].tolist() == (np.arange(6) * 11).tolist()
    # records sort bytewise in key order
    width = 16 + 9 + 84
    recs = [buf[HEADER_SIZE + i * width:HEADER_SIZE + i * width + 16] for i in range(6)]
    assert recs == sorted(recs)
    assert encode_array(a, tree) == buf
    dev.mark_dead(a.array_id)
    dev.free_array(a.array_id)
    assert not os.path.exists(path)


def test_bad_magic():
    with pytest.raises(StoreError):
        decode_array(b"XXXX" + bytes(40))


def test_device_arguments():
    with pytest.raises(ValueError):
        BlockDevice(block_size=0)
    with pytest.raises(ValueError):
        BlockDevice(key_size=4)
