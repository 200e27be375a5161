"""Stratified doubling array: levels, registration maps, updates and merges."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .query import fill_redundant_fps, insert_slots
from .model import VersionStats, compute_stats, version_forest
from .split import find_promotable, version_split
from .store import DATA, FP, SAMPLE, VALUE, BlockDevice, StoredArray
from .versions import VersionTree

log = logging.getLogger(__name__)


class InvariantViolation(AssertionError):
    pass


@dataclass
class SdaConfig:
    sample_rate: int = 8
    redundant_fp_spacing: int = 16
    version_split_enabled: bool = True
    paranoid: bool = False
    strict: bool = False         # raise on the first violation instead of collecting
    fault_injection: bool = False
    fast_path: bool = True       # closed-form plan for one-version merges (off: always the general path)

    def __post_init__(self):
        if self.sample_rate < 2:
            raise ValueError("sample_rate must be >= 2")
        if self.redundant_fp_spacing <= 8:
            raise ValueError("redundant_fp_spacing must be > 8")


@dataclass
class PromotionCandidate:
    keys: np.ndarray
    vers: np.ndarray
    vals: np.ndarray
    versions: set
    orphan: int
    target_level: int
    next_array: int | None = None
    stored_id: int | None = None

    def __len__(self) -> int:
        return int(self.keys.shape[0])


@dataclass
class MergeRecord:
    level: int
    inputs: int
    promoted: bool
    split_calls: list = field(default_factory=list)   # outputs per version_split call
    lead_poor: list = field(default_factory=list)     # outputs with lead < size/2, per call
    lead_fraction: float = 1.0


def _group_strata(tree: VersionTree, versions) -> list[set[int]]:
    """Partition a version set into strata (orphans grouped by common parent)."""
    vs, vparent, vchildren, orphans = version_forest(tree, versions)
    groups: dict[int, set[int]] = {}
    for o in orphans:
        g = groups.setdefault(tree.parent[o], set())
        stack = [o]
        while stack:
            u = stack.pop()
            g.add(u)
            stack.extend(vchildren.get(u, ()))
    return list(groups.values())


class SDA:
    """Fully-versioned dictionary built from levels of version-stratified arrays."""

    name = "sda"

    def __init__(self, tree: VersionTree | None = None, device: BlockDevice | None = None,
                 config: SdaConfig | None = None):
        self.tree = tree if tree is not None else VersionTree()
        self.device = device if device is not None else BlockDevice()
        self.config = config if config is not None else SdaConfig()
        self.reg: list[dict[int, int]] = []
        self.data: list[set[int]] = []
        self.epoch: list[int] = []
        self.merges: list[MergeRecord] = []
        self.violations: list[str] = []
        self.n_updates = 0
        self._check_cache: dict[int, tuple] = {}
        self._edge_cache: dict[int, tuple] = {}

    # ------------------------------------------------------------ public API
    def update(self, key: int, value: int, version: int) -> None:
        if not self.tree.is_leaf(version):
            raise ValueError(f"version {version} is not a leaf")
        cand = PromotionCandidate(np.array([key], dtype=np.int64), np.array([version], dtype=np.int64),
                                  np.array([value], dtype=np.int64), {version}, version, 0)
        self.n_updates += 1
        level = 0
        while cand is not None:
            if self.config.paranoid and self.config.version_split_enabled:
                from .invariants import check_promotion
                self._report(check_promotion(self, cand, level))
            cand = self._merge(cand, level)
            level += 1
        if self.config.paranoid and self.config.version_split_enabled:
            from .invariants import check_levels
            self._report(check_levels(self))

    def clone(self, parent: int) -> int:
        child = self.tree.clone(parent)
        self.clone_register(parent, child)
        return child

    def clone_register(self, parent: int, child: int) -> None:
        for l, reg in enumerate(self.reg):
            aid = reg.get(parent)
            if aid is None:
                continue
            reg[child] = aid
            arr = self.device.arrays[aid]
            arr.versions.add(child)
            if arr.kind == DATA:
                arr.stats = None
                self._check_cache.pop(aid, None)

    def point_query(self, key: int, version: int):
        from .query import point_query
        return point_query(self, key, version)

    def range_query(self, start: int, end: int, version: int):
        from .query import range_query
        return range_query(self, start, end, version)

    # ------------------------------------------------------------ helpers
    def _report(self, problems: list[str]) -> None:
        if not problems:
            return
        self.violations.extend(problems)
        if self.config.strict:
            raise InvariantViolation("; ".join(problems[:5]))

    def _ensure_level(self, l: int) -> None:
        while len(self.reg) <= l:
            self.reg.append({})
            self.data.append(set())
            self.epoch.append(0)

    @property
    def height(self) -> int:
        return len(self.reg)

    def stats_of(self, arr: StoredArray) -> VersionStats:
        if arr.stats is None:
            k, v, _ = arr.value_columns()
            arr.stats = compute_stats(k, v, arr.versions, self.tree)
        return arr.stats

    def registered(self, version: int) -> list[tuple[int, int]]:
        return [(l, reg[version]) for l, reg in enumerate(self.reg) if version in reg]

    def select_merge_target(self, cand: PromotionCandidate, level: int) -> int | None:
        if level < len(self.reg):
            aid = self.reg[level].get(cand.orphan)
            if aid is not None:
                return aid
        nxt = cand.next_array
        if self.device.is_alive(nxt) and self.device.arrays[nxt].level == level \
                and self.device.arrays[nxt].kind == DATA:
            return nxt
        return None

    # ------------------------------------------------------------ merge
    def _merge(self, cand: PromotionCandidate, l: int) -> PromotionCandidate | None:
        dev, tree, cfg = self.device, self.tree, self.config
        self._ensure_level(l)
        reg = self.reg[l]
        primary = self.select_merge_target(cand, l)

        absorbed: dict[int, StoredArray] = {}
        if not cfg.version_split_enabled:
            # the plain doubling array keeps one array per level holding every version
            for aid in sorted(self.data[l]):
                absorbed[aid] = dev.arrays[aid]
        for u in cand.versions:
            aid = reg.get(u)
            if aid is not None and dev.arrays[aid].kind == DATA:
                absorbed[aid] = dev.arrays[aid]
        if primary is not None and dev.arrays[primary].kind == DATA and primary not in absorbed:
            # next-array rule: only if the union stays a stratum
            trial = set(cand.versions) | dev.arrays[primary].versions
            for a in absorbed.values():
                trial |= a.versions
            if len(_group_strata(tree, trial)) == 1:
                absorbed[primary] = dev.arrays[primary]
            else:
                primary = None

        fp_src = None
        if primary is not None:
            p = dev.arrays[primary]
            if p.has_fp and dev.is_alive(p.next_array):
                fp_src = p

        # phase 1: merged stream and its statistics
        if cand.stored_id is not None:
            dev.read_all(dev.arrays[cand.stored_id])
        keys, vers, vals = cand.keys, cand.vers, cand.vals
        V = set(cand.versions)
        for a in absorbed.values():
            dev.read_all(a)
            ak, av, ap = a.value_columns()
            keys, vers, vals = _merge_rows(tree, keys, vers, vals, ak, av, ap)
            V |= a.versions
        if fp_src is not None and fp_src.kind == SAMPLE:
            dev.read_all(fp_src)
        rec = MergeRecord(l, 1 + len(absorbed), False)
        if cfg.version_split_enabled and len(V) == 1 and cfg.fast_path and not cfg.paranoid:
            plan = self._plan_single(keys, vers, next(iter(V)), l, rec)
        else:
            plan = self._plan_general(keys, vers, V, cand, l, rec)
        out_plan, promote, w = plan

        # phase 3: extraction
        next_out = fp_src.next_array if fp_src is not None else None
        if fp_src is not None:
            fpi = np.flatnonzero(fp_src.tags == FP)
            fp_rows = (fp_src.keys[fpi], fp_src.vers[fpi], fp_src.pay[fpi])
        else:
            fp_rows = None
        outputs: list[StoredArray] = []
        chains: list[list[StoredArray]] = []
        poor = 0
        lead_total = size_total = 0
        for U, idx, lead_U in out_plan:
            if cfg.fault_injection and l >= 1 and idx.size > 1:
                lead_U -= int(vers[idx[0]] in U)
                idx = idx[1:]
            if idx.size == 0:
                # no entry is visible in U; keep the versions registered nowhere at this level
                continue
            ov = vers[idx]
            out = self._write_output(keys[idx], ov, vals[idx], U, l, next_out, fp_rows)
            outputs.append(out)
            size_U = int(idx.size)
            lead_total += lead_U
            size_total += size_U
            if 2 * lead_U < size_U:
                poor += 1
            chains.append(self._sample_chain(out, l))
        rec.lead_poor.append(poor)

        nxt_cand = None
        promote_set: set[int] = set()
        if promote is not None:
            promote_set, pidx, plead = promote
            pk, pv, pp = keys[pidx], vers[pidx], vals[pidx]
            tmp = dev.write_array(pk, pv, np.zeros(pk.shape[0], np.uint8), pp, set(), l + 1, None, DATA, tree,
                                  validate=cfg.paranoid)
            dev.mark_dead(tmp.array_id)
            nxt_cand = PromotionCandidate(pk, pv, pp, promote_set, w, l + 1, next_out, tmp.array_id)
            lead_total += plead
            size_total += int(pk.shape[0])
            rec.promoted = True
        rec.lead_fraction = lead_total / size_total if size_total else 1.0
        self.merges.append(rec)

        # registration at level l
        touched_samples: set[int] = set()
        for aid, a in absorbed.items():
            for u in a.versions:
                if reg.get(u) == aid:
                    del reg[u]
            a.state = "dead"
            self.data[l].discard(aid)
            self._check_cache.pop(aid, None)
        for u in V:
            aid = reg.get(u)
            if aid is not None and dev.arrays[aid].kind == SAMPLE:
                dev.arrays[aid].versions.discard(u)
                touched_samples.add(aid)
                del reg[u]
        for out in outputs:
            for u in out.versions:
                reg[u] = out.array_id
            self.data[l].add(out.array_id)
        self.epoch[l] += 1

        # phase 4: back-propagate sample chains
        for out, chain in zip(outputs, chains):
            for j in range(l - 1, -1, -1):
                s = chain[l - 1 - j] if l - 1 - j < len(chain) else None
                rj = self.reg[j]
                for u in out.versions:
                    cur = rj.get(u)
                    if cur is not None:
                        ca = dev.arrays[cur]
                        if ca.kind == DATA:
                            continue
                        ca.versions.discard(u)
                        touched_samples.add(cur)
                    if s is not None:
                        rj[u] = s.array_id
                        s.versions.add(u)
                    elif cur is not None:
                        del rj[u]
            touched_samples.update(s.array_id for s in chain)

        # free dead inputs and orphaned samples
        for aid in absorbed:
            dev.free_array(aid)
        if cand.stored_id is not None:
            dev.free_array(cand.stored_id)
        for aid in touched_samples:
            s = dev.arrays.get(aid)
            if s is not None and not s.versions:
                s.state = "dead"
                dev.free_array(aid)
        return nxt_cand

    def _plan_single(self, keys, vers, v: int, l: int, rec: MergeRecord):
        """Merge plan for a one-version array, where every count has a closed form.

        All rows are ancestors of v, so the live rows are the first of each key
        run, live = lambda_T = their number and lead = rows written at v.
        """
        idx, lead, live_lead = kernels.runs(keys, vers, v)
        n_live = int(idx.shape[0])
        M = 1 << (l + 1)
        if n_live >= M and 3 * lead >= 2 * M and lead > 0 and 3 * n_live >= M:
            return [], ({v}, idx, int(live_lead)), v
        rec.split_calls.append(1)
        return [({v}, idx, int(live_lead))], None, None

    def _plan_general(self, keys, vers, V: set, cand: PromotionCandidate, l: int, rec: MergeRecord):
        tree, cfg = self.tree, self.config
        stats = compute_stats(keys, vers, V, tree)
        promote_set: set[int] = set()
        w = None
        if cfg.version_split_enabled:
            z = next((o for o in stats.orphans if tree.is_ancestor(o, cand.orphan)), None)
            if z is not None:
                w = find_promotable(stats, z, 1 << (l + 1))
            if w is not None:
                promote_set = set(stats.subtree(w))
            remaining = V - promote_set
            out_sets: list[set[int]] = []
            on_split = None
            if cfg.paranoid:
                from .invariants import split_preconditions
                on_split = lambda st: self._report(split_preconditions(st, l))
            for group in (_group_strata(tree, remaining) if remaining else []):
                gst = stats if group == V else compute_stats(keys, vers, group, tree, fparent=stats.fparent)
                sets = version_split(gst, l, on_split)
                rec.split_calls.append(len(sets))
                out_sets.extend(sets)
        else:
            if keys.shape[0] >= 1 << (l + 1):
                promote_set = set(V)
                w = stats.orphans[0]
                out_sets = []
            else:
                out_sets = [V]
        mark = np.zeros(len(tree), dtype=np.bool_)
        out_plan = []
        for U in out_sets:
            idx = stats.split_idx(U)
            out_plan.append((U, idx, _lead(mark, vers[idx], U)))
        promote = None
        if promote_set:
            pidx = stats.split_idx(promote_set)
            promote = (promote_set, pidx, _lead(mark, vers[pidx], promote_set))
        return out_plan, promote, w

    def _write_output(self, keys, vers, vals, U, l, next_out, fp_rows) -> StoredArray:
        dev, tree = self.device, self.tree
        tags = np.zeros(keys.shape[0], dtype=np.uint8)
        pay = vals
        if fp_rows is not None and fp_rows[0].shape[0]:
            fk, fv, fpay = fp_rows
            order = kernels.merge_perm(keys, tree.dfs[vers], tags, fk, tree.dfs[fv], np.ones(fk.shape[0], np.uint8))
            keys = np.concatenate((keys, fk))[order]
            vers = np.concatenate((vers, fv))[order]
            tags = np.concatenate((tags, np.ones(fk.shape[0], np.uint8)))[order]
            pay = np.concatenate((pay, fpay))[order]
            keys, vers, tags, pay = insert_slots(keys, vers, tags, pay, self.config.redundant_fp_spacing)
            out = dev.write_array(keys, vers, tags, pay, U, l, next_out, DATA, tree, validate=self.config.paranoid)
            fill_redundant_fps(dev, out)
        else:
            out = dev.write_array(keys, vers, tags, pay, U, l, None, DATA, tree, validate=self.config.paranoid)
        return out

    def _sample_chain(self, out: StoredArray, l: int) -> list[StoredArray]:
        dev, tree, r = self.device, self.tree, self.config.sample_rate
        chain: list[StoredArray] = []
        prev = out
        for j in range(1, l + 1):
            pos = np.arange(r - 1, len(prev), r, dtype=np.int64)
            if pos.size == 0:
                break
            s = dev.write_array(prev.keys[pos], prev.vers[pos], np.full(pos.size, FP, np.uint8), pos,
                                set(), l - j, prev.array_id, SAMPLE, tree, validate=self.config.paranoid)
            chain.append(s)
            prev = s
        return chain

    # ------------------------------------------------------------ reporting
    def snapshot(self) -> dict:
        dev = self.device
        out = {"updates": self.n_updates, "versions": len(self.tree), "merges": len(self.merges),
               "levels": self.height}
        for l in range(self.height):
            ids = self.data[l]
            out[f"level{l}.arrays"] = len(ids)
            out[f"level{l}.entries"] = sum(len(dev.arrays[a]) for a in ids)
        samples = [a for a in dev.arrays.values() if a.kind == SAMPLE]
        out["samples"] = len(samples)
        out["sample_entries"] = sum(len(a) for a in samples)
        hist = [0] * 6
        for m in self.merges:
            hist[min(5, int(-np.log2(max(m.lead_fraction, 1e-9))))] += 1
        for i, c in enumerate(hist):
            out[f"lead_fraction.2^-{i}"] = c
        io = dev.io_counters()
        out.update(io._asdict())
        out["violations"] = len(self.violations)
        return out

    def stats_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.snapshot().items())

    def n_arrays(self) -> int:
        return sum(len(s) for s in self.data)


def _lead(mark: np.ndarray, vers: np.ndarray, versions) -> int:
    """Rows written at a member of ``versions``; ``mark`` is scratch space, left cleared."""
    ids = list(versions)
    mark[ids] = True
    c = int(np.count_nonzero(mark[vers]))
    mark[ids] = False
    return c


def _merge_rows(tree, ka, va, pa, kb, vb, pb):
    return kernels.merge_rows(ka, va, pa, kb, vb, pb, tree.dfs)
