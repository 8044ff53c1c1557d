"""Compare simulated single-EP generation latency with the analytic tree model.

    python scripts/calibrate.py [--nodes 10] [--seed 0] [--trials 10000]
"""
import argparse

from dqcplan.network import generate_waxman
from dqcplan.simulator import calibrate


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10000)
    args = p.parse_args(argv)
    net = generate_waxman(args.nodes, seed=args.seed)
    pairs = [(a, b) for a in range(net.num_nodes) for b in range(a + 1, net.num_nodes)]
    print(f"{'pair':>8} {'hops':>4} {'analytic s':>11} {'simulated s':>11} {'ratio':>6}")
    for r in calibrate(net, pairs, args.trials, args.seed):
        print(f"{r['src']:>3}-{r['dst']:<4} {r['hops']:>4} {r['analytic']:>11.4g} "
              f"{r['simulated_mean']:>11.4g} {r['ratio']:>6.3f}")


if __name__ == "__main__":
    main()
