"""PMU placement experiments: greedy growth and observable-set search.

Two modes. ``greedy`` grows a seed set one bus at a time by paired Monte
Carlo error counts and prints the per-candidate table of each round.
``search`` looks for size-k sets passing the all-states observability
check, exhaustively for k <= 3 and by seeded random sampling above.

Usage:
    python3 scripts/placement_search.py greedy --seed-buses 3,7,13,20,23,29
    python3 scripts/placement_search.py search --k 2
"""

import argparse
import sys

from toposig import (
    DetectorConfig,
    PmuSet,
    ScenarioConfig,
    bundled_feeder_path,
    load_feeder,
)
from toposig.placement import greedy_placement, minimal_observable_search


def cmd_greedy(args):
    grid = load_feeder(bundled_feeder_path())
    seed = PmuSet(tuple(int(b) for b in args.seed_buses.split(",")))
    base = ScenarioConfig(
        grid=grid,
        pmus=seed,
        initial_state=grid.initial_state(),
        sd_kw=args.sd_kw,
        detector=DetectorConfig(tau=args.tau),
    )
    final, rounds = greedy_placement(
        grid,
        seed,
        args.num_run,
        args.tstop,
        base,
        target_size=args.target_size,
        campaign_seed=args.campaign_seed,
    )
    for r in rounds:
        print(
            f"round {r['round']}: seed errors {r['seed_errors']}/{args.num_run}, "
            f"chose bus {r['chosen_bus']}"
        )
        ranked = sorted(r["per_candidate"], key=lambda c: (c["errors"], c["bus"]))
        for c in ranked[: args.show]:
            print(f"    bus {c['bus']:2d}  errors {c['errors']}")
    print(f"final set: {final.buses}")
    return 0


def cmd_search(args):
    grid = load_feeder(bundled_feeder_path())
    found = minimal_observable_search(
        grid, args.k, draws=args.draws, seed=args.seed
    )
    print(f"k={args.k}: {len(found)} observable set(s)")
    for pm in found[: args.show]:
        print(f"    {pm.buses}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("greedy", help="grow a PMU set by Monte Carlo errors")
    g.add_argument("--seed-buses", default="3,7,13,20,23,29")
    g.add_argument("--num-run", type=int, default=200)
    g.add_argument("--tstop", type=int, default=200)
    g.add_argument("--target-size", type=int, default=None)
    g.add_argument("--campaign-seed", type=int, default=0)
    g.add_argument("--sd-kw", type=float, default=0.184)
    g.add_argument("--tau", type=int, default=2)
    g.add_argument("--show", type=int, default=8, help="candidates to print")
    g.set_defaults(func=cmd_greedy)

    s = sub.add_parser("search", help="find size-k all-states observable sets")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--draws", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--show", type=int, default=10)
    s.set_defaults(func=cmd_search)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
