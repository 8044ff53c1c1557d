"""Sweep one configuration variable and write per-run rows plus plot series.

    python scripts/sweep.py circuit.num_qubits 20 30 40 50 --out sweep.csv --plot sweep_plot.csv
    python scripts/sweep.py params.p_swap 0.2 0.4 0.6 --config configs/example.yaml
"""
import argparse

from dqcplan.experiment import ExperimentConfig, emit_plot_data, run_experiment, write_csv


def _value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("variable", help="dotted path, e.g. circuit.num_qubits or params.tau")
    p.add_argument("values", nargs="+", type=_value)
    p.add_argument("--config", help="base experiment config (YAML)")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--plot", default="sweep_plot.csv")
    args = p.parse_args(argv)
    base = ExperimentConfig.load(args.config).to_dict() if args.config else {}
    base.update(sweep_variable=args.variable, sweep_values=args.values)
    if args.seeds:
        base["seeds"] = args.seeds
    if args.trials:
        base["trials"] = args.trials
    rows = run_experiment(ExperimentConfig.from_dict(base))
    write_csv(rows, args.out)
    for s in emit_plot_data(rows, args.variable, args.plot):
        print(f"{s['algorithm']:<15} {args.variable}={s['sweep_value']!s:<8} "
              f"mean {s['mean']:.4g} s  (n={s['n']})")


if __name__ == "__main__":
    main()
