"""Command-line interface: ``dqcplan <subcommand> ...``.

Exit status is 0 on success and 2 with a one-line diagnostic on invalid
input or infeasible instances.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import yaml

from .allocation import Allocation, allocate, allocation_cost
from .circuit import CNOT, CZ, Circuit, build_circuit_graph, generate_benchmark, generate_random_circuit
from .errors import DqcError
from .experiment import ALGORITHMS, ExperimentConfig, emit_plot_data, plan_algorithm, run_experiment, \
    summarize, write_csv
from .network import NetworkParams, QuantumNetwork, build_network_coupling_graph, generate_waxman
from .simulator import SimConfig, simulate


def _load_config(path) -> dict:
    if not path:
        return {}
    return yaml.safe_load(Path(path).read_text()) or {}


def _params(args) -> NetworkParams:
    return NetworkParams(**_load_config(args.config).get("params", {}))


def _write(obj, out) -> None:
    text = json.dumps(obj, indent=1)
    if out:
        Path(out).write_text(text)
    else:
        print(text)


def _network(args) -> QuantumNetwork:
    net = QuantumNetwork.load(args.network)
    if args.config:
        net = QuantumNetwork(net.nodes, net.links, _params(args))
    return net


def cmd_generate_circuit(args) -> None:
    if args.kind == "random":
        c = generate_random_circuit(args.num_qubits, args.gates_per_qubit, args.binary_fraction,
                                    args.binary_kind, args.seed)
    else:
        c = generate_benchmark(args.kind, args.num_qubits)
    _write(c.to_dict(), args.out)


def cmd_generate_network(args) -> None:
    net = generate_waxman(args.nodes, args.area, args.beta, args.alpha, args.memories, args.seed,
                          _params(args), args.exec_capacity)
    _write(net.to_dict(), args.out)


def cmd_allocate(args) -> None:
    circuit, net = Circuit.load(args.circuit), _network(args)
    coupling = build_network_coupling_graph(net)
    alloc = allocate(circuit, net, coupling)
    cost = allocation_cost(build_circuit_graph(circuit), coupling, alloc)
    print(f"allocation cost {cost:.6g} s", file=sys.stderr)
    _write(alloc.to_dict(net), args.out)


def _plan(args):
    circuit, net = Circuit.load(args.circuit), _network(args)
    alloc = Allocation.load(args.allocation) if args.allocation else allocate(circuit, net)
    out = plan_algorithm(args.algorithm, circuit, alloc, net, purify=not args.no_purify)
    if not out.validation.ok:
        raise DqcError("schedule failed validation: " + "; ".join(out.validation.violations[:3]))
    return out


def cmd_schedule(args) -> None:
    out = _plan(args)
    doc = out.schedule.to_dict()
    doc.update(algorithm=out.algorithm, analytic_total=out.analytic_total(),
               demands=[d.to_dict() for d in out.plan.demands],
               gate_eps={str(g): list(v) for g, v in sorted(out.plan.gate_eps.items())},
               num_remote_gates=out.num_remote_gates, num_ces=out.num_ces)
    _write(json.loads(json.dumps(doc, default=str)), args.out)


def cmd_simulate(args) -> None:
    out = _plan(args)
    res = simulate(out.plan, SimConfig(seed=args.seed, trials=args.trials,
                                       overlap_next_batch=not args.no_overlap,
                                       record_trace=bool(args.trace)))
    if args.trace:
        res.write_trace(args.trace)
    row = {"algorithm": out.algorithm, "analytic_total": out.analytic_total(not args.no_overlap),
           **res.summary()}
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)
    finally:
        if args.out:
            fh.close()


def cmd_experiment(args) -> None:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.trials is not None:
        cfg.trials = args.trials
    out = args.out or cfg.output or "results.csv"

    def progress(row):
        if not args.quiet:
            print(f"seed={row['seed']} {row['algorithm']}: {row['status']} "
                  f"{row.get('analytic_total', '')}", file=sys.stderr)

    rows = run_experiment(cfg, progress)
    write_csv(rows, out)
    if args.plot_data:
        emit_plot_data(rows, cfg.sweep_variable or "", args.plot_data)
    for alg, med in summarize(rows).items():
        print(f"{alg}: median analytic total {med:.6g} s", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dqcplan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="YAML/JSON file; its 'params' map overrides NetworkParams")
        sp.add_argument("--out", help="output file (default: stdout)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("generate-circuit", help="random or benchmark circuit")
    common(g)
    g.add_argument("--kind", choices=["random", "ghz", "qft", "qpe"], default="random")
    g.add_argument("--num-qubits", type=int, default=50)
    g.add_argument("--gates-per-qubit", type=int, default=50)
    g.add_argument("--binary-fraction", type=float, default=0.5)
    g.add_argument("--binary-kind", choices=[CNOT, CZ], default=CZ)
    g.set_defaults(func=cmd_generate_circuit)

    n = sub.add_parser("generate-network", help="Waxman network")
    common(n)
    n.add_argument("--nodes", type=int, default=10)
    n.add_argument("--area", type=float, default=100.0)
    n.add_argument("--beta", type=float, default=0.9)
    n.add_argument("--alpha", type=float, default=0.5)
    n.add_argument("--memories", type=int, default=50)
    n.add_argument("--exec-capacity", type=int, default=8)
    n.set_defaults(func=cmd_generate_network)

    a = sub.add_parser("allocate", help="qubit-to-memory allocation")
    common(a, seed=False)
    a.add_argument("--circuit", required=True)
    a.add_argument("--network", required=True)
    a.set_defaults(func=cmd_allocate)

    for name, func, help_ in (("schedule", cmd_schedule, "plan and batch EPs"),
                              ("simulate", cmd_simulate, "plan, then Monte-Carlo execute")):
        s = sub.add_parser(name, help=help_)
        common(s, seed=(name == "simulate"))
        s.add_argument("--circuit", required=True)
        s.add_argument("--network", required=True)
        s.add_argument("--allocation", help="allocation file (default: computed)")
        s.add_argument("--algorithm", choices=ALGORITHMS, default="greedy-tg")
        s.add_argument("--no-purify", action="store_true")
        if name == "simulate":
            s.add_argument("--trials", type=int, default=100)
            s.add_argument("--no-overlap", action="store_true")
            s.add_argument("--trace", help="write trial-0 event trace CSV here")
        s.set_defaults(func=func)

    e = sub.add_parser("experiment", help="run the algorithm comparison")
    e.add_argument("--config", help="experiment config (YAML/JSON)")
    e.add_argument("--out", help="CSV output path")
    e.add_argument("--seed", type=int, help="run only this seed")
    e.add_argument("--trials", type=int, help="simulation trials per run")
    e.add_argument("--plot-data", help="also write per-algorithm series here")
    e.add_argument("--quiet", action="store_true")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (DqcError, OSError, KeyError, TypeError, yaml.YAMLError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
