"""Time the numba kernels against their numpy counterparts on the same inputs.

Run with ``python -m sda.bench``. Both variants are importable regardless of
``SDA_DISABLE_NUMBA``, so one process measures both.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from . import kernels
from .versions import VersionTree


def random_tree(n_versions: int, rng: np.random.Generator) -> VersionTree:
    t = VersionTree()
    for _ in range(n_versions - 1):
        t.clone(int(rng.integers(len(t))))
    return t


def random_rows(n: int, tree: VersionTree, key_space: int, rng: np.random.Generator):
    keys = rng.integers(0, key_space, n).astype(np.int64)
    vers = rng.integers(0, len(tree), n).astype(np.int64)
    order = np.lexsort((-tree.dfs[vers], keys))
    return keys[order], vers[order]


def cases(n: int, n_versions: int, seed: int):
    rng = np.random.default_rng(seed)
    tree = random_tree(n_versions, rng)
    keys, vers = random_rows(n, tree, max(2, n // 4), rng)
    d, h = tree.dfs[vers], tree.hi[vers]
    in_v = np.ones(len(tree), dtype=np.bool_)
    fparent = kernels.np_forest(keys, d, h)
    labs = np.sort(rng.choice(len(tree), size=max(1, len(tree) // 4), replace=False)).astype(np.int64)
    k2, v2 = random_rows(n // 2, tree, max(2, n // 4), rng)
    pay, pay2 = np.arange(n, dtype=np.int64), np.arange(k2.shape[0], dtype=np.int64)
    empty = np.zeros(0, dtype=np.int64)
    probe = int(keys[n // 2])
    return {
        "forest": ((keys, d, h), kernels.nb_forest, kernels.np_forest),
        "stats": ((keys, vers, tree.dfs, tree.hi, in_v, empty), kernels.nb_stats, kernels.np_stats),
        "select": ((fparent, d, h, labs), kernels.nb_select, kernels.np_select),
        "merge_rows": ((keys, vers, pay, k2, v2, pay2, tree.dfs), kernels.nb_merge_rows, kernels.np_merge_rows),
        "search": ((keys, vers, tree.dfs, probe, 0, 0, n, 64), kernels.nb_search, kernels.np_search),
    }


def run(n: int = 100_000, n_versions: int = 200, repeat: int = 5, seed: int = 0) -> list[tuple[str, float, float]]:
    rows = []
    for name, (args, nb, npf) in cases(n, n_versions, seed).items():
        nb(*args)  # compile / load from cache outside the timing
        t_nb = min(timeit.repeat(lambda: nb(*args), number=1, repeat=repeat))
        t_np = min(timeit.repeat(lambda: npf(*args), number=1, repeat=repeat))
        rows.append((name, t_nb, t_np))
    return rows


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="python -m sda.bench", description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=100_000, help="rows per kernel input")
    p.add_argument("--versions", type=int, default=200)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args(argv)
    print(f"numba active by default: {kernels.USING_NUMBA}")
    print(f"{'kernel':<12}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, t_nb, t_np in run(a.n, a.versions, a.repeat, a.seed):
        print(f"{name:<12}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>10.1f}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
