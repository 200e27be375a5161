import hashlib
import io
import random

import numpy as np
import pytest

from sda.baselines import OracleStore
from sda.engine import SDA, InvariantViolation, PromotionCandidate, SdaConfig
from sda.store import DATA, SAMPLE, BlockDevice, FP, SLOT
from sda.versions import VersionTree
from sda.workload import WorkloadSpec, make_structure, run


def mixed(seed, n=600, fast_path=True, paranoid=False, split=True, key_space=400):
    """Random inserts into random leaves with clones; returns the engine and an oracle."""
    rng = random.Random(seed)
    tree = VersionTree()
    s = SDA(tree=tree, device=BlockDevice(block_size=8),
            config=SdaConfig(fast_path=fast_path, paranoid=paranoid, strict=paranoid,
                             version_split_enabled=split))
    o = OracleStore(tree)
    for i in range(n):
        if i % 40 == 39:
            s.clone(rng.randrange(len(tree)))
        leaves = tree.leaves()
        v = rng.choice(leaves)
        k = rng.randrange(key_space)
        s.update(k, i, v)
        o.update(k, i, v)
    return s, o


def test_first_insert():
    s = SDA()
    s.update(5, 50, 0)
    assert s.height == 1 and len(s.data[0]) == 1
    (aid,) = s.data[0]
    assert len(s.device.arrays[aid]) == 1
    assert s.point_query(5, 0) == (50, 0)


def test_update_rejects_internal_version():
    s = SDA()
    s.clone(0)
    with pytest.raises(ValueError):
        s.update(1, 1, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SdaConfig(sample_rate=1)
    with pytest.raises(ValueError):
        SdaConfig(redundant_fp_spacing=8)


def test_root_only_is_a_doubling_array():
    n = 4096
    # arrays below B entries live in the merge buffer
    s = SDA(device=BlockDevice(block_size=16, memory_entries=16))
    rng = random.Random(0)
    for i in range(n):
        s.update(rng.randrange(1 << 40), i, 0)
    # one array per occupied level, sized like the binary digits of n
    sizes = sorted(len(s.device.arrays[a]) for l in range(s.height) for a in s.data[l])
    assert sum(sizes) == n
    assert all(len(s.data[l]) <= 1 for l in range(s.height))
    w = s.device.writes
    assert w <= 3 * (n / 16) * np.log2(n)


def test_clone_register_copies_registrations():
    s = SDA()
    for i in range(5):
        s.update(i, i, 0)
    before = s.registered(0)
    c = s.clone(0)
    assert s.registered(c) == before
    for k in range(6):
        assert s.point_query(k, c) == s.point_query(k, 0)
    e = SDA()
    c2 = e.clone(0)
    assert e.registered(c2) == []


def test_select_merge_target_rules():
    s = SDA()
    cand = PromotionCandidate(np.array([1]), np.array([0]), np.array([1]), {0}, 0, 0)
    assert s.select_merge_target(cand, 0) is None
    s.update(1, 1, 0)
    (aid,) = s.data[0]
    assert s.select_merge_target(cand, 0) == aid
    # an unregistered orphan falls back to the candidate's next array when it sits at the level
    c = s.tree.clone(0)
    other = PromotionCandidate(np.array([2]), np.array([c]), np.array([2]), {c}, c, 0, next_array=aid)
    assert s.select_merge_target(other, 0) == aid
    other.next_array = None
    assert s.select_merge_target(other, 0) is None


def test_first_promotion_to_level_one_backpropagates():
    s = SDA(config=SdaConfig(sample_rate=2))
    s.update(1, 1, 0)
    s.update(2, 2, 0)
    assert 0 in s.reg[1]
    lvl0 = s.device.arrays[s.reg[0][0]]
    assert lvl0.kind == SAMPLE and lvl0.next_array == s.reg[1][0]


def test_data_registration_not_displaced():
    s = SDA(config=SdaConfig(sample_rate=2))
    for i in range(3):
        s.update(i, i, 0)
    # two rows at level 1, the newest one at level 0 as data
    assert s.device.arrays[s.reg[0][0]].kind == DATA
    assert s.device.arrays[s.reg[1][0]].kind == DATA


@pytest.mark.parametrize("seed", range(4))
def test_paranoid_mixed_workload(seed):
    s, o = mixed(seed, n=500, paranoid=True)
    assert s.violations == []
    for v in range(len(s.tree)):
        for k in range(0, 400, 3):
            assert s.point_query(k, v) == o.point_query(k, v)


@pytest.mark.parametrize("seed", range(3))
def test_level_structure_after_workload(seed):
    s, _ = mixed(seed, n=800)
    dev = s.device
    for l in range(s.height):
        seen: set[int] = set()
        for aid in s.data[l]:
            a = dev.arrays[aid]
            assert a.level == l and a.state == "alive"
            assert not (a.versions & seen)
            seen |= a.versions
            for u in a.versions:
                assert s.reg[l][u] == aid
        for u, aid in s.reg[l].items():
            assert u in dev.arrays[aid].versions
    # FPs into a live next array are in range; a remerged next array leaves them unused
    for a in dev.arrays.values():
        fp = a.tags == FP
        if fp.any() and dev.is_alive(a.next_array):
            assert a.pay[fp].max() < len(dev.arrays[a.next_array])
    assert dev.live_entries == sum(len(a) for a in dev.arrays.values())


@pytest.mark.parametrize("seed", range(3))
def test_merge_records(seed):
    s, _ = mixed(seed, n=1500, key_space=10**9)
    assert all(m.lead_fraction >= 1 / 39 for m in s.merges)
    assert all(c <= 13 for m in s.merges for c in m.split_calls)
    assert all(p <= 1 for m in s.merges for p in m.lead_poor)


def _trace(s, o):
    h = hashlib.sha256()
    for l in range(s.height):
        for aid in sorted(s.data[l]):
            a = s.device.arrays[aid]
            h.update(a.keys.tobytes() + a.vers.tobytes() + a.pay.tobytes())
            h.update(repr(sorted(a.versions)).encode())
    h.update(repr(s.device.io_counters()).encode())
    return h.hexdigest()


@pytest.mark.parametrize("seed", range(3))
def test_fast_path_matches_general(seed):
    a, _ = mixed(seed, n=700, fast_path=True)
    b, _ = mixed(seed, n=700, fast_path=False)
    assert _trace(a, None) == _trace(b, None)
    assert [(m.level, m.promoted, m.split_calls) for m in a.merges] == \
        [(m.level, m.promoted, m.split_calls) for m in b.merges]


def test_nosplit_variant_one_array_per_level():
    s, o = mixed(1, n=700, split=False)
    assert all(len(ids) <= 1 for ids in s.data)
    for v in range(len(s.tree)):
        for k in range(0, 400, 5):
            assert s.point_query(k, v) == o.point_query(k, v)


def test_fault_injection_is_caught():
    spec = WorkloadSpec(n_inserts=3000, clone_every=100, point_every=1, range_every=50,
                        range_size=16, seed=0, key_space=10**6)
    res = run(spec, io.StringIO(), verify=True, fault_injection=True)
    assert not res.ok


def test_strict_mode_raises():
    s = SDA(config=SdaConfig(paranoid=True, strict=True))
    with pytest.raises(InvariantViolation):
        s._report(["made-up problem"])


def test_slots_only_with_forward_pointers():
    s, _ = mixed(2, n=1000, key_space=10**9)
    for a in s.device.arrays.values():
        slots = a.tags == SLOT
        if a.kind == DATA and a.next_array is None:
            assert not slots.any()
        if a.kind == DATA and slots.any():
            assert len(a) >= s.config.redundant_fp_spacing


def test_space_is_linear():
    spec = WorkloadSpec(n_inserts=4000, clone_every=50, seed=3, structure="sda")
    s = make_structure(spec)
    from sda.workload import ops
    worst = 0.0
    for i, op in enumerate(ops(spec)):
        if op.kind == "insert":
            s.update(op.key, op.value, op.version)
        elif op.kind == "clone":
            s.clone(op.version)
        if s.n_updates:
            worst = max(worst, s.device.live_entries / s.n_updates)
    assert worst < 12
