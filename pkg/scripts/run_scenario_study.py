"""Simulate-and-refit study over the bundled scenario table.

Prints relative bias and MSE per scenario and, with --compare, the ratio of
each MSE to the reference values passed in a CSV with the same columns.

    python scripts/run_scenario_study.py --ids 1,7 --reps 50 --seed 20190101
"""

import argparse
import csv
import sys
import time

import numpy as np

from crmcopula.analytics import scenarios


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ids", default="1,7")
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--n-policies", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=20190101)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--compare", default=None, help="CSV with columns scenario, <parameter>... of reference MSEs")
    args = ap.parse_args(argv)

    ids = {int(i) for i in args.ids.split(",")}
    chosen = [s for s in scenarios.load_scenarios() if s.id in ids]
    ref = {}
    if args.compare:
        with open(args.compare, newline="") as f:
            ref = {int(r["scenario"]): np.array([float(r[n]) for n in scenarios.PARAM_NAMES]) for r in csv.DictReader(f)}

    t0 = time.perf_counter()
    reps = scenarios.scenario_study(chosen, args.seed, reps=args.reps, n_policies=args.n_policies,
                                    threads=args.threads,
                                    progress=lambda sc, r: print(f"  scenario {sc.id} rep {r + 1}", file=sys.stderr))
    head = "".join(f"{n:>9}" for n in scenarios.PARAM_NAMES)
    for rep in reps:
        print(f"scenario {rep.scenario.id}: {rep.n_ok} converged, {rep.n_failed} failed")
        print(f"{'':>14}{head}")
        print(f"{'rel. bias %':>14}" + "".join(f"{100 * v:9.2f}" for v in rep.relative_bias))
        print(f"{'MSE':>14}" + "".join(f"{v:9.4f}" for v in rep.mse))
        if rep.scenario.id in ref:
            print(f"{'MSE / ref':>14}" + "".join(f"{v:9.2f}" for v in rep.mse / ref[rep.scenario.id]))
    print(f"{time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
