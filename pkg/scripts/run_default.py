"""Run the default five-algorithm comparison and print per-algorithm medians.

    python scripts/run_default.py [--out results.csv] [--seeds 0 1 2 3 4] [--trials 100]
"""
import argparse
import statistics
import sys
import time

from dqcplan.experiment import ALGORITHMS, ExperimentConfig, run_experiment, write_csv


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results_default.csv")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--trials", type=int, default=100)
    args = p.parse_args(argv)
    cfg = ExperimentConfig(seeds=args.seeds, trials=args.trials)
    t0 = time.perf_counter()
    rows = run_experiment(cfg, lambda r: print(f"seed {r['seed']:>3} {r['algorithm']:<15} {r['status']}",
                                               file=sys.stderr))
    write_csv(rows, args.out)
    print(f"{len(rows)} runs in {time.perf_counter() - t0:.1f}s -> {args.out}")
    print(f"{'algorithm':<15} {'analytic':>10} {'simulated':>10} {'EP demands':>10} {'violations':>10}")
    for alg in ALGORITHMS:
        ok = [r for r in rows if r["algorithm"] == alg and r["status"] == "ok"]
        if not ok:
            print(f"{alg:<15} {'(none feasible)':>10}")
            continue
        med = lambda k: statistics.median(r[k] for r in ok)  # noqa: E731
        print(f"{alg:<15} {med('analytic_total'):>10.4g} {med('sim_mean'):>10.4g} "
              f"{med('num_ep_demands'):>10.0f} {med('decoherence_violations'):>10.0f}")


if __name__ == "__main__":
    main()
