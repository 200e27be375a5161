"""``sda-bench``: run a versioned-dictionary workload and emit CSV metrics."""
from __future__ import annotations

import argparse
import logging
import sys

from .workload import STRUCTURES, WorkloadSpec, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sda-bench", description=__doc__)
    p.add_argument("--structure", choices=STRUCTURES, default="sda")
    p.add_argument("--n", type=int, default=100_000, help="number of inserts")
    p.add_argument("--clone-every", type=int, default=1000, help="inserts between clones (0: never)")
    p.add_argument("--range-size", type=int, default=256, help="expected results per range query (Z)")
    p.add_argument("--range-every", type=int, default=1000, help="inserts between range queries (0: never)")
    p.add_argument("--point-every", type=int, default=0, help="inserts between point queries (0: never)")
    p.add_argument("--block-size", type=int, default=64, help="block size B in entries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paranoid", action="store_true", help="check level invariants after every merge")
    p.add_argument("--csv-out", help="write CSV here instead of standard output")
    p.add_argument("--verify", action="store_true", help="check every query against the brute-force oracle")
    p.add_argument("--report-every", type=int, default=1000, help="inserts between CSV rows")
    p.add_argument("--key-space", type=int, default=1 << 62, help="keys are uniform in [0, key-space)")
    p.add_argument("--memory-entries", type=int, default=0,
                   help="arrays smaller than this are memory-resident and cost no I/O")
    p.add_argument("--cache-nodes", type=int, default=0, help="CoW B-tree node cache size (0: write-through)")
    p.add_argument("--data-dir", help="also write every array to a file in this directory")
    p.add_argument("--inject-fault", action="store_true", help="drop one entry per deep merge (negative control)")
    p.add_argument("--wall-clock", action="store_true", help="elapsed column in real seconds, not modeled I/O time")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = WorkloadSpec(n_inserts=args.n, clone_every=args.clone_every, range_size=args.range_size,
                            range_every=args.range_every, point_every=args.point_every, seed=args.seed,
                            structure=args.structure, block_size=args.block_size, key_space=args.key_space,
                            memory_entries=args.memory_entries, cache_nodes=args.cache_nodes,
                            report_every=args.report_every)
    except ValueError as e:
        parser.error(str(e))
    if args.verify and args.n > 100_000:
        parser.error("--verify is meant for desk-scale runs (--n <= 100000)")

    out = open(args.csv_out, "w", newline="") if args.csv_out else sys.stdout
    # keep standard output pure CSV when the CSV goes there
    info = sys.stderr if out is sys.stdout else sys.stdout
    try:
        res = run(spec, out, verify=args.verify, paranoid=args.paranoid, fault_injection=args.inject_fault,
                  wall_clock=args.wall_clock, data_dir=args.data_dir)
    finally:
        if out is not sys.stdout:
            out.close()
    print(res.structure.stats_text(), file=info)
    print(f"ops={res.ops_done}", file=info)
    if args.verify or args.paranoid:
        if res.ok:
            print("verify: OK", file=info)
        else:
            print(f"verify: FAILED {res.divergence}", file=info)
            return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
