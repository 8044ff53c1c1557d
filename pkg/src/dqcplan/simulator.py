"""Seeded Monte-Carlo execution of a batch schedule.

Every unit EP (one purification copy) is generated by its swapping tree:
a leaf repeats link attempts until one succeeds, an internal swap waits for
both children, takes ``t_swap`` and succeeds with ``p_swap``; on failure
both children are regenerated.  Links used by several unit EPs of the same
batch are time-shared: each stream gets ``1/load`` of the link, so its
attempts take ``load`` times longer.  A batch ends when all its EPs exist.

Gate execution is grouped into segments: segment ``b`` holds the gates whose
EPs come from batch ``b`` or whose operands were last touched in segment
``b``.  With overlap enabled, segment ``b`` runs while batch ``b+1`` is being
generated.  Local binary gates first move one operand next to the other with
forward-only SWAPs inside its node, updating the live memory map.

All trials are simulated together with numpy; each unit EP draws from its
own generator keyed by ``(seed, batch, ep, copy)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .allocation import Allocation
from .circuit import Circuit
from .entanglement import SwappingTree, route_ep, tree_latency
from .errors import ParameterError, PlanError
from .network import QuantumNetwork
from .scheduling import Schedule

# protocol overheads in units of t_gate
TELEGATE_OPS = 3        # local CNOT + measurement + correction
CE_SETUP_OPS = 2        # entangle the copy before its first gate


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    trials: int = 100
    overlap_next_batch: bool = True
    record_trace: bool = False
    max_regenerations: int = 3

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")


@dataclass
class ExecutionPlan:
    """Everything needed to replay a schedule.

    ``demands[i].multiplicity`` copies of EP ``i`` are generated with
    ``trees[i]``; ``gate_eps`` lists the EPs each gate consumes and
    ``ce_first_gate`` the gates that must first set up a linked copy.
    """
    circuit: Circuit
    allocation: Allocation
    network: QuantumNetwork
    demands: list
    trees: list
    schedule: Schedule
    gate_eps: dict
    cat: bool = False                    # remote gates use linked copies, not telegates
    ce_first_gate: frozenset = frozenset()

    def __post_init__(self):
        if len(self.trees) != len(self.demands) or any(t is None for t in self.trees):
            raise PlanError("every demand needs a swapping tree")

    @classmethod
    def build(cls, circuit, allocation, network, demands, schedule, gate_eps, trees=None,
              cat=False, ce_first_gate=frozenset()) -> "ExecutionPlan":
        if trees is None:
            trees = [route_ep(network, d.src, d.dst) for d in demands]
        gate_eps = {int(g): (v,) if isinstance(v, (int, np.integer)) else tuple(v)
                    for g, v in gate_eps.items()}
        return cls(circuit, allocation, network, list(demands), list(trees), schedule,
                   gate_eps, cat, frozenset(ce_first_gate))

    def batch_of(self) -> dict[int, int]:
        return {e: b for b, batch in enumerate(self.schedule.batches) for e in batch}


def gate_segments(plan: ExecutionPlan) -> list[int]:
    """Segment index of every gate."""
    batch_of = plan.batch_of()
    seg_of_qubit = [0] * plan.circuit.num_qubits
    out = []
    for gi, g in enumerate(plan.circuit.gates):
        s = max(seg_of_qubit[q] for q in g.qubits)
        for e in plan.gate_eps.get(gi, ()):
            if e not in batch_of:
                raise PlanError(f"gate {gi} needs EP {e}, which no batch generates")
            s = max(s, batch_of[e])
        for q in g.qubits:
            seg_of_qubit[q] = s
        out.append(s)
    return out


def ops_durations(plan: ExecutionPlan) -> tuple[np.ndarray, int]:
    """Critical-path duration of each segment's gates and SWAPs, and the SWAP count."""
    net, params = plan.network, plan.network.params
    nseg = max(1, len(plan.schedule.batches))
    segs = gate_segments(plan)
    host = plan.allocation.nodes(net)
    where = dict(enumerate(plan.allocation.eta))      # qubit -> memory
    occupant = {m: q for q, m in where.items()}       # memory -> qubit
    paths_cache: dict[int, dict] = {}
    ready = np.zeros(plan.circuit.num_qubits)
    seg_end = np.zeros(nseg)
    current = -1
    swaps = 0
    order = sorted(range(len(plan.circuit.gates)), key=lambda gi: (segs[gi], gi))
    for gi in order:
        g = plan.circuit.gates[gi]
        s = segs[gi]
        if s != current:
            current = s
            ready[:] = 0.0
        if not g.is_binary:
            start = ready[g.qubits[0]]
            ready[g.qubits[0]] = start + params.t_gate
        elif host[g.qubits[0]] != host[g.qubits[1]]:
            if plan.cat:
                dur = params.t_gate * (1 + CE_SETUP_OPS * (gi in plan.ce_first_gate))
            else:
                dur = params.t_gate * TELEGATE_OPS
            start = max(ready[q] for q in g.qubits)
            for q in g.qubits:
                ready[q] = start + dur
        else:
            a, b = g.qubits
            node = net.nodes[host[a]]
            if node.id not in paths_cache:
                paths_cache[node.id] = dict(nx.all_pairs_shortest_path(node.coupling_graph))
            path = paths_cache[node.id][where[a]][where[b]]
            # move a forward until adjacent to b: len(path) - 2 swaps
            for m in path[1:-1]:
                other = occupant.get(m)
                t0 = max(ready[a], ready[other]) if other is not None else ready[a]
                src = where[a]
                where[a] = m
                occupant[m] = a
                if other is not None:
                    where[other] = src
                    occupant[src] = other
                    ready[other] = t0 + params.t_local_swap
                else:
                    del occupant[src]
                ready[a] = t0 + params.t_local_swap
                swaps += 1
            start = max(ready[a], ready[b])
            ready[a] = ready[b] = start + params.t_gate
        seg_end[s] = max(seg_end[s], ready[list(g.qubits)].max())
    return seg_end, swaps


def timeline(gen_times: np.ndarray, ops_times: np.ndarray, overlap: bool) -> np.ndarray:
    """Total time; ``gen_times`` is (trials, batches) or (batches,), ``ops_times`` (batches,)."""
    gen = np.atleast_2d(np.asarray(gen_times, dtype=float))
    ops = np.asarray(ops_times, dtype=float)
    nb = gen.shape[1]
    if nb == 0:
        return np.full(gen.shape[0], float(ops.sum()))
    gen_start = np.zeros(gen.shape[0])
    ops_end = np.zeros(gen.shape[0])
    for b in range(nb):
        gen_end = gen_start + gen[:, b]
        ops_start = np.maximum(gen_end, ops_end)
        ops_end = ops_start + ops[b]
        gen_start = gen_end if overlap else ops_end
    return ops_end


def analytic_total(plan: ExecutionPlan, overlap: bool = True) -> float:
    ops, _ = ops_durations(plan)
    return float(timeline(np.asarray(plan.schedule.latencies)[None, :], ops, overlap)[0])


def sample_tree(tree: SwappingTree, n: int, rng: np.random.Generator, leaf_scale=None,
                t_swap: float = 0.0) -> np.ndarray:
    """``n`` realized generation times of one EP through ``tree``.

    ``leaf_scale[pos]`` stretches the attempts on link ``pos`` (time sharing).
    """
    def rec(node, k):
        if node.is_leaf:
            lat, p = tree.leaves[node.lo]
            scale = 1.0 if leaf_scale is None else leaf_scale[node.lo]
            return rng.geometric(p, size=k) * (lat * scale)
        total = np.zeros(k)
        pending = np.arange(k)
        while pending.size:
            left = rec(node.left, pending.size)
            right = rec(node.right, pending.size)
            total[pending] += np.maximum(left, right) + t_swap
            ok = rng.random(pending.size) < tree.p_swap
            pending = pending[~ok]
        return total

    return rec(tree.root, n)


@dataclass
class SimResult:
    totals: np.ndarray                  # per trial
    batch_times: np.ndarray             # (trials, batches)
    ep_latency_mean: np.ndarray         # per demand, slowest copy, mean over trials
    decoherence_violations: int
    swaps: int
    trace: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(self.totals.mean())

    @property
    def std(self) -> float:
        return float(self.totals.std(ddof=1)) if len(self.totals) > 1 else 0.0

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "kind", "subject", "outcome"])
            w.writerows(self.trace)

    def summary(self) -> dict:
        return {"trials": len(self.totals), "mean": self.mean, "std": self.std,
                "decoherence_violations": self.decoherence_violations, "swaps": self.swaps}


def _loads(plan: ExecutionPlan, batch) -> dict:
    loads: dict = {}
    for e in batch:
        t, m = plan.trees[e], plan.demands[e].multiplicity
        for pos in range(t.hops):
            k = t.link_key(pos)
            loads[k] = loads.get(k, 0) + m
    return loads


def simulate(plan: ExecutionPlan, config: SimConfig = SimConfig(), shared: bool = True) -> SimResult:
    """Realized total execution time over ``config.trials`` seeded trials.

    ``shared=False`` gives every EP exclusive links (the independent case).
    """
    params = plan.network.params
    n = config.trials
    batches = plan.schedule.batches
    ops, swaps = ops_durations(plan)
    gen = np.zeros((n, len(batches)))
    ep_mean = np.zeros(len(plan.demands))
    created = {}                     # ep -> (n,) creation offset within its batch
    trace = []
    for b, batch in enumerate(batches):
        loads = _loads(plan, batch) if shared else {}
        worst = np.zeros(n)
        for e in batch:
            tree = plan.trees[e]
            scale = [loads.get(tree.link_key(p), 1) for p in range(tree.hops)] if shared else None
            slowest = np.zeros(n)
            for c in range(plan.demands[e].multiplicity):
                rng = np.random.default_rng([config.seed, b, e, c])
                slowest = np.maximum(slowest, sample_tree(tree, n, rng, scale, params.t_swap))
            created[e] = slowest
            ep_mean[e] = slowest.mean()
            worst = np.maximum(worst, slowest)
        gen[:, b] = worst
    # decoherence: EPs wait from creation until their segment's gates start
    violations = 0
    segs = gate_segments(plan) if batches else []
    first_use = {}
    for gi, eps in plan.gate_eps.items():
        for e in eps:
            first_use[e] = min(first_use.get(e, segs[gi]), segs[gi])
    extra = np.zeros((n, len(batches)))
    for _ in range(config.max_regenerations):
        starts = _segment_starts(gen + extra, ops, config.overlap_next_batch)
        gen_starts = _gen_starts(gen + extra, ops, config.overlap_next_batch)
        found = False
        for b, batch in enumerate(batches):
            for e in batch:
                seg = first_use.get(e, b)
                age = starts[:, seg] - (gen_starts[:, b] + created[e])
                bad = age > params.tau
                if bad.any():
                    found = True
                    violations += int(bad.sum())
                    rng = np.random.default_rng([config.seed, b, e, 1_000_000 + violations])
                    regen = sample_tree(plan.trees[e], n, rng, t_swap=params.t_swap)
                    # regenerate right before use: the consuming segment is delayed
                    extra[:, max(seg, b)] = np.maximum(extra[:, max(seg, b)], np.where(bad, regen, 0.0))
                    created[e] = np.where(bad, starts[:, seg] - gen_starts[:, b] + regen, created[e])
        if not found:
            break
    totals = timeline(gen + extra, ops, config.overlap_next_batch)
    if config.record_trace:
        trace = _trace(gen[0] + extra[0], ops, config.overlap_next_batch, batches, created)
    return SimResult(totals, gen + extra, ep_mean, violations, swaps, trace)


def _gen_starts(gen, ops, overlap):
    n, nb = gen.shape
    out = np.zeros((n, nb))
    gen_start = np.zeros(n)
    ops_end = np.zeros(n)
    for b in range(nb):
        out[:, b] = gen_start
        gen_end = gen_start + gen[:, b]
        ops_end = np.maximum(gen_end, ops_end) + ops[b]
        gen_start = gen_end if overlap else ops_end
    return out


def _segment_starts(gen, ops, overlap):
    n, nb = gen.shape
    out = np.zeros((n, nb))
    gen_start = np.zeros(n)
    ops_end = np.zeros(n)
    for b in range(nb):
        gen_end = gen_start + gen[:, b]
        out[:, b] = np.maximum(gen_end, ops_end)
        ops_end = out[:, b] + ops[b]
        gen_start = gen_end if overlap else ops_end
    return out


def _trace(gen, ops, overlap, batches, created):
    rows = []
    gen_start = 0.0
    ops_end = 0.0
    for b, batch in enumerate(batches):
        rows.append((gen_start, "batch_start", f"batch{b}", len(batch)))
        for e in batch:
            rows.append((gen_start + float(created[e][0]), "ep_ready", f"ep{e}", "ok"))
        gen_end = gen_start + gen[b]
        rows.append((gen_end, "batch_done", f"batch{b}", "ok"))
        ops_start = max(gen_end, ops_end)
        rows.append((ops_start, "ops_start", f"segment{b}", ""))
        ops_end = ops_start + ops[b]
        rows.append((ops_end, "ops_end", f"segment{b}", ""))
        gen_start = gen_end if overlap else ops_end
    rows.sort(key=lambda r: r[0])
    return rows


def calibrate(network: QuantumNetwork, node_pairs, trials: int = 10000, seed: int = 0) -> list[dict]:
    """Monte-Carlo mean single-EP latency against the analytic tree latency."""
    rows = []
    for i, (a, b) in enumerate(node_pairs):
        tree = route_ep(network, a, b)
        rng = np.random.default_rng([seed, i])
        sim = sample_tree(tree, trials, rng, t_swap=network.params.t_swap)
        analytic = tree_latency(tree)
        rows.append({"src": a, "dst": b, "hops": tree.hops, "analytic": analytic,
                     "simulated_mean": float(sim.mean()), "ratio": float(sim.mean() / analytic)})
    return rows

