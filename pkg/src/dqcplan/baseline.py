"""Disjoint-Paths comparison baseline (a reconstruction, not the original code).

Remote gates are layered into time slots as early as their operands allow.
Each layer's EPs (one unit EP per purification copy) are then generated in
rounds: every round greedily routes pending EPs, shortest first, along
pairwise edge-disjoint hop-shortest paths in the links still free that
round; the round lasts as long as its slowest EP.  Paths are disjoint, so no
link is shared and every EP keeps its independent latency.  When a balanced
tree on the hop-shortest path would exceed ``tau``, the EP takes its
minimum-latency route if that route's links are free, and otherwise waits
for the next round.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .allocation import Allocation
from .circuit import Circuit
from .entanglement import BatchOracle, EpDemand, balanced_tree, route_ep, tree_latency
from .errors import InfeasibleError
from .network import QuantumNetwork
from .scheduling import ConsumptionOrder, Schedule, build_consumption_order, derive_ep_demands


@dataclass(frozen=True)
class GateLayer:
    slot: int
    gates: tuple[int, ...]


def layer_gates(circuit: Circuit, allocation: Allocation, network: QuantumNetwork) -> list[GateLayer]:
    """Earliest slot after every remote gate the gate depends on.

    Dependencies follow shared operands; unary and local gates pass them on,
    so a remote gate is never layered before a remote gate it transitively
    waits for.
    """
    host = allocation.nodes(network)
    last_slot: dict[int, int] = {}
    slots: dict[int, list[int]] = {}
    for gi, g in enumerate(circuit.gates):
        prior = max(last_slot.get(q, -1) for q in g.qubits)
        if g.is_binary and host[g.qubits[0]] != host[g.qubits[1]]:
            prior += 1
            slots.setdefault(prior, []).append(gi)
        for q in g.qubits:
            last_slot[q] = prior
    return [GateLayer(s, tuple(slots[s])) for s in sorted(slots)]


def _bfs_path(adj, src, dst, blocked):
    """Hop-shortest path avoiding ``blocked`` links; neighbours explored by id."""
    prev = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in adj[u]:
            if v not in prev and (min(u, v), max(u, v)) not in blocked:
                prev[v] = u
                queue.append(v)
    if dst not in prev:
        return None
    path = [dst]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return path[::-1]


@dataclass
class BaselineResult:
    """Rounds over unit EPs, in the same shape the main pipeline produces."""
    total_time: float
    layers: list[GateLayer]
    unit_demands: list[EpDemand]
    trees: list                                 # chosen balanced tree per unit EP
    schedule: Schedule                          # one batch per round
    order: ConsumptionOrder                     # over unit EPs
    gate_eps: dict[int, tuple[int, ...]]        # remote gate -> its unit EPs
    round_layer: list[int]

    def oracle(self, network: QuantumNetwork) -> BatchOracle:
        return BatchOracle(network, self.unit_demands, self.trees)


def disjoint_paths_execute(layers, network: QuantumNetwork, gate_demand: dict,
                           circuit: Circuit) -> BaselineResult:
    """Generate each layer's unit EPs in rounds of edge-disjoint paths.

    ``gate_demand`` maps every layered gate to its :class:`EpDemand`; unit
    EPs inherit the shared-operand order of their gates.
    """
    adj = {n: sorted(network.graph.neighbors(n)) for n in network.graph.nodes}
    tau = network.params.tau
    hop_len = {}
    unit_demands, trees, gate_eps = [], [], {}
    batches, latencies, round_layer = [], [], []
    for layer in layers:
        pending = []
        for gi in layer.gates:
            d = gate_demand[gi]
            ids = []
            for _ in range(d.multiplicity):
                ids.append(len(unit_demands))
                unit_demands.append(EpDemand(d.src, d.dst, 1, d.origin))
                trees.append(None)
            gate_eps[gi] = tuple(ids)
            key = (min(d.src, d.dst), max(d.src, d.dst))
            if key not in hop_len:
                hop_len[key] = len(_bfs_path(adj, d.src, d.dst, set())) - 1
            pending.extend((hop_len[key], u) for u in ids)
        pending.sort()
        while pending:
            blocked: set = set()
            routed, left = [], []
            for hops, u in pending:
                tree = _round_tree(network, adj, unit_demands[u], blocked, tau)
                if tree is None:
                    left.append((hops, u))
                    continue
                blocked.update(tree.link_key(p) for p in range(tree.hops))
                trees[u] = tree
                routed.append(u)
            if not routed:
                d = unit_demands[left[0][1]]
                raise InfeasibleError(f"no route between nodes {d.src} and {d.dst} "
                                      f"generates an EP within tau = {tau:.6g}")
            batches.append(tuple(sorted(routed)))
            latencies.append(max(tree_latency(trees[u]) for u in routed))
            round_layer.append(layer.slot)
            pending = left
    order = build_consumption_order(circuit, gate_eps)
    schedule = Schedule(tuple(batches), tuple(latencies))
    return BaselineResult(math.fsum(latencies), list(layers), unit_demands, trees, schedule,
                          order, gate_eps, round_layer)


def _round_tree(network, adj, demand, blocked, tau):
    """Balanced tree on the hop-shortest free path, or the minimum-latency
    route if that is over ``tau``; None if neither fits this round."""
    path = _bfs_path(adj, demand.src, demand.dst, blocked)
    if path is not None:
        tree = balanced_tree(network, path)
        if tree_latency(tree) <= tau:
            return tree
    best = route_ep(network, demand.src, demand.dst)
    free = all(best.link_key(p) not in blocked for p in range(best.hops))
    if free and tree_latency(best) <= tau:
        return best
    return None


def run_baseline(circuit: Circuit, allocation: Allocation, network: QuantumNetwork,
                 purify: bool = True) -> BaselineResult:
    demands, gate_to_ep = derive_ep_demands(circuit, allocation, network, purify)
    layers = layer_gates(circuit, allocation, network)
    gate_demand = {gi: demands[e] for gi, e in gate_to_ep.items()}
    return disjoint_paths_execute(layers, network, gate_demand, circuit)
