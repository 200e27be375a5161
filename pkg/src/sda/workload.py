"""Workload generation and the metrics-emitting runner behind the CLI.

The op stream is a pure function of the spec: the generator keeps its own
shadow copy of the version tree's shape, so the same seed yields the same ops
whichever structure consumes them.
"""
from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass, field
from typing import Iterator, TextIO

from .baselines import CowBTree, OracleStore
from .engine import SDA, SdaConfig
from .store import BlockDevice
from .versions import VersionTree

STRUCTURES = ("sda", "sda-nosplit", "cow-btree")
METRIC_FIELDS = ("ops_done", "reads", "writes", "bytes", "live_entries", "levels", "arrays", "elapsed")
BLOCK_SECONDS = 1e-4  # modeled latency of one block transfer


@dataclass(frozen=True)
class WorkloadSpec:
    n_inserts: int = 100_000
    clone_every: int = 1000
    p_leaf_clone: float = 1 / 3
    range_size: int = 256
    range_every: int = 1000
    point_every: int = 0
    key_space: int = 1 << 62
    key_size: int = 16
    value_size: int = 84
    seed: int = 0
    structure: str = "sda"
    block_size: int = 64
    memory_entries: int = 0
    cache_nodes: int = 0
    report_every: int = 1000

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}; expected one of {', '.join(STRUCTURES)}")
        if not 0.0 <= self.p_leaf_clone <= 1.0:
            raise ValueError("p_leaf_clone must be in [0, 1]")
        for name in ("n_inserts", "clone_every", "range_size", "range_every", "point_every",
                     "memory_entries", "cache_nodes", "report_every"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.block_size < 1 or self.key_space < 1:
            raise ValueError("block_size and key_space must be positive")


@dataclass
class Op:
    kind: str                 # insert | clone | point | range
    version: int
    key: int = 0
    value: int = 0
    end: int = 0


def ops(spec: WorkloadSpec) -> Iterator[Op]:
    """The op stream for ``spec``: inserts with clones, point and range queries interleaved."""
    rng = random.Random(spec.seed)
    leaves = [0]
    internal: list[int] = []
    parent = [-1]
    written = [0]             # inserts per version
    keys: list[int] = []
    for i in range(spec.n_inserts):
        if spec.clone_every and i and i % spec.clone_every == 0:
            if internal and rng.random() >= spec.p_leaf_clone:
                p = rng.choice(internal)
            else:
                p = rng.choice(leaves)
                leaves.remove(p)
                internal.append(p)
            leaves.append(len(parent))
            parent.append(p)
            written.append(0)
            yield Op("clone", p)
        k = rng.randrange(spec.key_space)
        keys.append(k)
        v = rng.choice(leaves)
        written[v] += 1
        yield Op("insert", v, k, i)
        done = i + 1
        if spec.point_every and done % spec.point_every == 0:
            k = rng.choice(keys) if rng.random() < 0.5 else rng.randrange(spec.key_space)
            yield Op("point", rng.randrange(len(parent)), k)
        if spec.range_every and done % spec.range_every == 0:
            v = rng.randrange(len(parent))
            # keys visible at v, up to collisions: the inserts on its root path
            n_v, u = 0, v
            while u != -1:
                n_v += written[u]
                u = parent[u]
            width = max(1, spec.key_space * spec.range_size // max(1, n_v))
            lo = rng.randrange(spec.key_space)
            yield Op("range", v, lo, end=min(spec.key_space - 1, lo + width))


def make_structure(spec: WorkloadSpec, tree: VersionTree | None = None, paranoid: bool = False,
                   fault_injection: bool = False, data_dir: str | None = None):
    tree = tree if tree is not None else VersionTree()
    dev = BlockDevice(spec.block_size, spec.memory_entries, data_dir, spec.key_size, spec.value_size)
    if spec.structure == "cow-btree":
        return CowBTree(tree, dev, spec.cache_nodes)
    cfg = SdaConfig(version_split_enabled=spec.structure == "sda", paranoid=paranoid,
                    fault_injection=fault_injection)
    s = SDA(tree, dev, cfg)
    s.name = spec.structure
    return s


@dataclass
class RunResult:
    structure: object
    rows: list[dict] = field(default_factory=list)
    divergence: str | None = None
    ops_done: int = 0

    @property
    def ok(self) -> bool:
        return self.divergence is None and not getattr(self.structure, "violations", None)


def _row(s, ops_done: int, wall_start: float | None) -> dict:
    io_ = s.device.io_counters()
    blocks = io_.reads + io_.writes
    elapsed = time.perf_counter() - wall_start if wall_start is not None else blocks * BLOCK_SECONDS
    return {"ops_done": ops_done, "reads": io_.reads, "writes": io_.writes,
            "bytes": io_.bytes_read + io_.bytes_written, "live_entries": io_.live_entries,
            "levels": s.height, "arrays": s.n_arrays(), "elapsed": f"{elapsed:.6f}"}


def run(spec: WorkloadSpec, csv_out: TextIO | None = None, verify: bool = False, paranoid: bool = False,
        fault_injection: bool = False, wall_clock: bool = False, data_dir: str | None = None) -> RunResult:
    """Execute the workload; with ``verify`` every query is checked against the oracle."""
    s = make_structure(spec, paranoid=paranoid, fault_injection=fault_injection, data_dir=data_dir)
    oracle = OracleStore(s.tree) if verify else None
    res = RunResult(s)
    writer = None
    if csv_out is not None:
        writer = csv.DictWriter(csv_out, fieldnames=METRIC_FIELDS, lineterminator="\n",
                                quoting=csv.QUOTE_NONE)
        writer.writeheader()
    start = time.perf_counter() if wall_clock else None
    inserts = 0
    n = 0
    for n, op in enumerate(ops(spec), 1):
        if op.kind == "insert":
            s.update(op.key, op.value, op.version)
            if oracle is not None:
                oracle.update(op.key, op.value, op.version)
            inserts += 1
            if writer is not None and spec.report_every and inserts % spec.report_every == 0:
                row = _row(s, n, start)
                res.rows.append(row)
                writer.writerow(row)
        elif op.kind == "clone":
            s.clone(op.version)
        elif op.kind == "point":
            got = s.point_query(op.key, op.version)
            if oracle is not None:
                want = oracle.point_query(op.key, op.version)
                if got != want:
                    res.divergence = (f"op {n}: point_query(key={op.key}, version={op.version}) "
                                      f"returned {got}, oracle {want}")
                    break
        else:
            got = s.range_query(op.key, op.end, op.version)
            if oracle is not None:
                want = oracle.range_query(op.key, op.end, op.version)
                if got != want:
                    miss = sorted(set(want) ^ set(got))[:3]
                    res.divergence = (f"op {n}: range_query([{op.key}, {op.end}], version={op.version}) "
                                      f"returned {len(got)} rows, oracle {len(want)}; first differences {miss}")
                    break
        if res.divergence is None and getattr(s, "violations", None):
            res.divergence = f"op {n}: invariant violation: {s.violations[0]}"
            break
    res.ops_done = n
    if isinstance(s, CowBTree):
        s.flush()
    if writer is not None and (not res.rows or res.rows[-1]["ops_done"] != n):
        row = _row(s, n, start)
        res.rows.append(row)
        writer.writerow(row)
    return res


def run_to_string(spec: WorkloadSpec, **kw) -> tuple[str, RunResult]:
    buf = io.StringIO()
    res = run(spec, buf, **kw)
    return buf.getvalue(), res
