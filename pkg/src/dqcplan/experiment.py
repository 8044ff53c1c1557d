"""End-to-end pipeline and experiment driver.

Algorithms:

* ``greedy-tg`` / ``dp-tg`` — one telegate EP per remote gate, batched by
  Greedy or DP;
* ``greedy-ce`` / ``dp-ce`` — CNOTs rewritten to CZ, cat-entanglements
  selected, their EPs batched by Greedy or DP;
* ``disjoint-paths`` — the layered edge-disjoint-paths baseline.

Every seed shares one circuit, one network and one allocation across all
algorithms.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .allocation import Allocation, allocate, allocation_cost
from .baseline import run_baseline
from .cat import greedy_ce
from .circuit import CZ, Circuit, build_circuit_graph, cnot_to_cz, generate_benchmark, \
    generate_random_circuit
from .entanglement import BatchOracle
from .errors import DqcError, ParameterError
from .network import NetworkParams, QuantumNetwork, build_network_coupling_graph, generate_waxman
from .scheduling import ConsumptionOrder, Schedule, ValidationReport, build_consumption_order, \
    derive_ep_demands, dp_schedule, greedy_schedule, validate_schedule
from .simulator import ExecutionPlan, SimConfig, analytic_total, simulate

ALGORITHMS = ("greedy-tg", "dp-tg", "greedy-ce", "dp-ce", "disjoint-paths")

CSV_COLUMNS = ("sweep_variable", "sweep_value", "algorithm", "seed", "status", "analytic_total",
               "generation_latency", "sim_mean", "sim_std", "decoherence_violations",
               "num_remote_gates", "num_ep_demands", "num_unit_eps", "num_batches", "num_ces",
               "alloc_cost", "wall_clock_s", "diagnostic")


@dataclass
class CircuitSpec:
    kind: str = "random"              # random | ghz | qft | qpe
    num_qubits: int = 50
    gates_per_qubit: int = 50
    binary_fraction: float = 0.5
    binary_kind: str = CZ

    def build(self, seed: int) -> Circuit:
        if self.kind == "random":
            return generate_random_circuit(self.num_qubits, self.gates_per_qubit,
                                           self.binary_fraction, self.binary_kind, seed)
        return generate_benchmark(self.kind, self.num_qubits)


@dataclass
class NetworkSpec:
    num_nodes: int = 10
    area_km: float = 100.0
    beta: float = 0.9
    alpha: float = 0.5
    memories: int | None = None        # default: one memory per circuit qubit
    exec_capacity: int = 8
    file: str | None = None

    def build(self, seed: int, num_qubits: int, params: NetworkParams) -> QuantumNetwork:
        if self.file:
            net = QuantumNetwork.load(self.file)
            return QuantumNetwork(net.nodes, net.links, params)
        mems = self.memories if self.memories is not None else num_qubits
        return generate_waxman(self.num_nodes, self.area_km, self.beta, self.alpha, mems,
                               seed, params, self.exec_capacity)


@dataclass
class ExperimentConfig:
    circuit: CircuitSpec = field(default_factory=CircuitSpec)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    trials: int = 100
    params: dict = field(default_factory=dict)
    overlap: bool = True
    purify: bool = True
    sweep_variable: str | None = None    # dotted path such as "circuit.num_qubits"
    sweep_values: list = field(default_factory=list)
    output: str | None = None

    def __post_init__(self):
        if not self.algorithms:
            raise ParameterError("need at least one algorithm")
        if not self.seeds:
            raise ParameterError("need at least one seed")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ParameterError(f"unknown algorithms {sorted(unknown)}")
        if self.sweep_variable and not self.sweep_values:
            raise ParameterError("sweep_variable needs sweep_values")

    @property
    def network_params(self) -> NetworkParams:
        return NetworkParams(**self.params)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        circuit = CircuitSpec(**d.pop("circuit", {}))
        network = NetworkSpec(**d.pop("network", {}))
        return cls(circuit=circuit, network=network, **d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})

    def to_dict(self) -> dict:
        return asdict(self)

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        cfg = copy.deepcopy(self)
        obj = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            obj = getattr(obj, part) if not isinstance(obj, dict) else obj[part]
        if isinstance(obj, dict):
            obj[parts[-1]] = value
        elif hasattr(obj, parts[-1]):
            setattr(obj, parts[-1], value)
        else:
            raise ParameterError(f"unknown sweep variable {dotted!r}")
        return cfg


@dataclass
class PlanOutcome:
    """A validated schedule plus what is needed to simulate it."""
    algorithm: str
    schedule: Schedule
    order: ConsumptionOrder
    oracle: BatchOracle
    plan: ExecutionPlan
    validation: ValidationReport
    num_remote_gates: int
    num_ces: int = 0

    @property
    def num_demands(self) -> int:
        return len(self.plan.demands)

    @property
    def num_unit_eps(self) -> int:
        return sum(d.multiplicity for d in self.plan.demands)

    def analytic_total(self, overlap: bool = True) -> float:
        return analytic_total(self.plan, overlap)


def _scheduler(algorithm: str):
    return greedy_schedule if algorithm.startswith("greedy") else dp_schedule


def plan_algorithm(algorithm: str, circuit: Circuit, allocation: Allocation,
                   network: QuantumNetwork, purify: bool = True) -> PlanOutcome:
    """Run one algorithm end to end (without simulation)."""
    if algorithm not in ALGORITHMS:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    tau = network.params.tau
    if algorithm in ("greedy-tg", "dp-tg"):
        demands, gate_to_ep = derive_ep_demands(circuit, allocation, network, purify)
        order = build_consumption_order(circuit, gate_to_ep)
        oracle = BatchOracle(network, demands)
        schedule = _scheduler(algorithm)(range(len(demands)), order, tau, oracle)
        plan = ExecutionPlan.build(circuit, allocation, network, demands, schedule, gate_to_ep,
                                   oracle.trees)
        report = validate_schedule(schedule, order, tau, oracle)
        return PlanOutcome(algorithm, schedule, order, oracle, plan, report, len(demands))
    if algorithm in ("greedy-ce", "dp-ce"):
        cz = cnot_to_cz(circuit)
        ce_plan = greedy_ce(cz, allocation, network, purify)
        oracle = BatchOracle(network, ce_plan.demands)
        schedule = _scheduler(algorithm)(range(len(ce_plan.demands)), ce_plan.order, tau, oracle)
        first = {}
        for gi in sorted(ce_plan.gate_ces):
            for c in ce_plan.gate_ces[gi]:
                first.setdefault(c, gi)
        plan = ExecutionPlan.build(cz, allocation, network, ce_plan.demands, schedule,
                                   ce_plan.gate_ces, oracle.trees, cat=True,
                                   ce_first_gate=set(first.values()))
        report = validate_schedule(schedule, ce_plan.order, tau, oracle)
        return PlanOutcome(algorithm, schedule, ce_plan.order, oracle, plan, report,
                           ce_plan.num_remote_gates, len(ce_plan.ces))
    if algorithm == "disjoint-paths":
        res = run_baseline(circuit, allocation, network, purify)
        oracle = res.oracle(network)
        plan = ExecutionPlan.build(circuit, allocation, network, res.unit_demands, res.schedule,
                                   res.gate_eps, res.trees)
        report = validate_schedule(res.schedule, res.order, tau, oracle)
        return PlanOutcome(algorithm, res.schedule, res.order, oracle, plan, report,
                           len(res.gate_eps))
    raise AssertionError(algorithm)


@dataclass
class SeedInstance:
    circuit: Circuit
    network: QuantumNetwork
    allocation: Allocation
    alloc_cost: float


def build_instance(config: ExperimentConfig, seed: int) -> SeedInstance:
    circuit = config.circuit.build(seed)
    network = config.network.build(seed, circuit.num_qubits, config.network_params)
    coupling = build_network_coupling_graph(network)
    alloc = allocate(circuit, network, coupling)
    cost = allocation_cost(build_circuit_graph(circuit), coupling, alloc)
    return SeedInstance(circuit, network, alloc, cost)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_experiment(config: ExperimentConfig, progress=None) -> list[dict]:
    """One row per (sweep value, seed, algorithm)."""
    points = [(config.sweep_variable, v, config.with_value(config.sweep_variable, v))
              for v in config.sweep_values] if config.sweep_variable else [("", "", config)]
    rows = []
    for var, value, cfg in points:
        for seed in cfg.seeds:
            inst = build_instance(cfg, seed)
            for algorithm in cfg.algorithms:
                t0 = time.perf_counter()
                row = {"sweep_variable": var, "sweep_value": value, "algorithm": algorithm,
                       "seed": seed, "alloc_cost": inst.alloc_cost}
                try:
                    out = plan_algorithm(algorithm, inst.circuit, inst.allocation, inst.network,
                                         cfg.purify)
                    if not out.validation.ok:
                        raise DqcError("schedule failed validation: " + out.validation.violations[0])
                    sim = simulate(out.plan, SimConfig(seed=seed, trials=cfg.trials,
                                                      overlap_next_batch=cfg.overlap))
                    row.update(status="ok", analytic_total=out.analytic_total(cfg.overlap),
                               generation_latency=out.schedule.total_latency,
                               sim_mean=sim.mean, sim_std=sim.std,
                               decoherence_violations=sim.decoherence_violations,
                               num_remote_gates=out.num_remote_gates,
                               num_ep_demands=out.num_demands, num_unit_eps=out.num_unit_eps,
                               num_batches=len(out.schedule.batches), num_ces=out.num_ces,
                               diagnostic="")
                except DqcError as exc:
                    row.update(status="infeasible", diagnostic=str(exc))
                row["wall_clock_s"] = time.perf_counter() - t0
                rows.append(row)
                if progress:
                    progress(row)
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    rows.sort(key=lambda r: (str(r["sweep_variable"]), _sort_key(r["sweep_value"]), r["seed"],
                             order[r["algorithm"]]))
    return rows


def _sort_key(v):
    return (0, float(v), "") if isinstance(v, (int, float)) else (1, 0.0, str(v))


def write_csv(rows, path, include_wall_clock: bool = True) -> None:
    cols = [c for c in CSV_COLUMNS if include_wall_clock or c != "wall_clock_s"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot_data(rows, sweep_variable: str, path=None, metric: str = "analytic_total") -> list[dict]:
    """Mean and standard deviation of ``metric`` per (algorithm, sweep value)."""
    series: dict[tuple, list[float]] = {}
    for r in rows:
        if (r.get("sweep_variable") or "") != (sweep_variable or ""):
            raise ParameterError(f"row from sweep {r.get('sweep_variable')!r} mixed into "
                                 f"{sweep_variable!r}")
        if r.get("status") != "ok":
            continue
        key = (r["algorithm"], r["sweep_value"])
        series.setdefault(key, []).append(float(r[metric]))
    order = {a: i for i, a in enumerate(ALGORITHMS)}
    out = []
    for (alg, value), xs in sorted(series.items(), key=lambda kv: (order.get(kv[0][0], 99),
                                                                  _sort_key(_num(kv[0][1])))):
        arr = np.asarray(xs)
        out.append({"algorithm": alg, "sweep_value": value, "mean": float(arr.mean()),
                    "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0, "n": len(arr)})
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["algorithm", "sweep_value", "mean", "std", "n"])
            w.writeheader()
            for rec in out:
                w.writerow({k: _fmt(v) for k, v in rec.items()})
    return out


def _num(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        return v


def summarize(rows) -> dict:
    """Median analytic total per algorithm over ok rows."""
    by: dict[str, list[float]] = {}
    for r in rows:
        if r.get("status") == "ok":
            by.setdefault(r["algorithm"], []).append(float(r["analytic_total"]))
    return {a: float(np.median(v)) for a, v in by.items()}


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, default=_json_default))


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, float) and math.isinf(x):
        return None
    raise TypeError(type(x))

