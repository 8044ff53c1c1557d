"""Cat-entanglement (CE) selection for CZ-form circuits.

A CE places a linked read-only copy of qubit ``q`` at another node for the
duration of one unary-free window of ``q``; it costs one EP.  A remote gate
``(qi, qj, t)`` is covered by one CE copying an operand to the other
operand's node, or by two CEs copying both operands to a common third node,
with ``t`` inside the windows.  Selection repeatedly solves a
densest-subgraph problem with vertex weights, edge weights and vertex costs
(DSVC) over the candidates and keeps the densest peeled subgraph.
"""
from __future__ import annotations

import bisect
import heapq
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import networkx as nx

from .allocation import Allocation
from .circuit import CNOT, Circuit
from .entanglement import EpDemand, ep_latency, make_demand
from .errors import CapacityError, ContractError, InfeasibleError, ParameterError
from .network import QuantumNetwork
from .scheduling import ConsumptionOrder, build_consumption_order

THIRD_NODE_HOPS = 2


@dataclass(frozen=True)
class CatEntanglement:
    qubit: int
    target_node: int
    time: int                 # window start (inclusive)
    valid_until: float        # next unary gate on the qubit (exclusive), inf if none
    cost: float

    def __post_init__(self):
        if not self.time < self.valid_until:
            raise ParameterError("CE window must be nonempty")

    def active_at(self, t) -> bool:
        return self.time <= t < self.valid_until

    @property
    def key(self):
        return (self.qubit, self.time, self.target_node)

    def to_dict(self) -> dict:
        return {"qubit": self.qubit, "target_node": self.target_node, "time": self.time,
                "valid_until": None if math.isinf(self.valid_until) else int(self.valid_until),
                "cost": self.cost}

    @classmethod
    def from_dict(cls, d: dict) -> "CatEntanglement":
        vu = d["valid_until"]
        return cls(int(d["qubit"]), int(d["target_node"]), int(d["time"]),
                   math.inf if vu is None else int(vu), float(d["cost"]))


def _remote_gates(circuit: Circuit, host) -> list[int]:
    return [gi for gi, g in enumerate(circuit.gates)
            if g.is_binary and host[g.qubits[0]] != host[g.qubits[1]]]


def _windows(circuit: Circuit):
    """Per qubit, sorted unary gate times (window boundaries)."""
    bounds = [[] for _ in range(circuit.num_qubits)]
    for g in circuit.gates:
        if not g.is_binary:
            bounds[g.qubits[0]].append(g.time)
    return bounds


def _window_of(bounds, t):
    """(start, end) of the unary-free window containing instant ``t``."""
    k = bisect.bisect_right(bounds, t)
    start = bounds[k - 1] + 1 if k else 0
    end = bounds[k] if k < len(bounds) else math.inf
    return start, end


def _require_cz(circuit: Circuit):
    if any(g.kind == CNOT for g in circuit.gates):
        raise ContractError("CE planning needs a CZ-form circuit; apply cnot_to_cz first")


def _third_nodes(network: QuantumNetwork, a: int, b: int) -> list[int]:
    cache = network._cache.setdefault("hop_balls", {})
    if a not in cache:
        for n in range(network.num_nodes):
            cache[n] = set(nx.single_source_shortest_path_length(network.graph, n, THIRD_NODE_HOPS))
    near = cache[a] | cache[b]
    return sorted(k for k in near if k not in (a, b) and network.nodes[k].exec_capacity > 0)


def enumerate_ce_candidates(circuit: Circuit, allocation: Allocation,
                            network: QuantumNetwork) -> list[CatEntanglement]:
    """All CE options able to help some remote gate, deduplicated and sorted."""
    _require_cz(circuit)
    host = allocation.nodes(network)
    bounds = _windows(circuit)
    found: dict[tuple, CatEntanglement] = {}

    def add(q, node, t):
        start, end = _window_of(bounds[q], t)
        key = (q, start, node)
        if key not in found:
            found[key] = CatEntanglement(q, node, start, end, ep_latency(network, host[q], node))

    for gi in _remote_gates(circuit, host):
        g = circuit.gates[gi]
        qi, qj = g.qubits
        add(qi, host[qj], g.time)
        add(qj, host[qi], g.time)
        for k in _third_nodes(network, host[qi], host[qj]):
            add(qi, k, g.time)
            add(qj, k, g.time)
    return [found[k] for k in sorted(found)]


def coverage(ce_set, circuit: Circuit, allocation: Allocation, network: QuantumNetwork) -> set[int]:
    """Indices of remote gates covered by ``ce_set`` alone or in pairs."""
    host = allocation.nodes(network)
    by_qubit: dict[int, list[CatEntanglement]] = {}
    for ce in ce_set:
        by_qubit.setdefault(ce.qubit, []).append(ce)
    out = set()
    for gi in _remote_gates(circuit, host):
        g = circuit.gates[gi]
        qi, qj = g.qubits
        live_i = {ce.target_node for ce in by_qubit.get(qi, ()) if ce.active_at(g.time)}
        live_j = {ce.target_node for ce in by_qubit.get(qj, ()) if ce.active_at(g.time)}
        if host[qj] in live_i or host[qi] in live_j or (live_i & live_j) - {host[qi], host[qj]}:
            out.add(gi)
    return out


@dataclass
class CeContext:
    """Candidates plus, per remote gate, the candidate ids covering it."""
    circuit: Circuit
    host: tuple[int, ...]
    candidates: list[CatEntanglement]
    singles: dict[int, list[int]]
    pairs: dict[int, list[tuple[int, int]]]

    @classmethod
    def build(cls, circuit, allocation, network, candidates=None) -> "CeContext":
        candidates = candidates if candidates is not None else \
            enumerate_ce_candidates(circuit, allocation, network)
        host = allocation.nodes(network)
        index: dict[tuple, int] = {}
        bounds = _windows(circuit)
        for cid, ce in enumerate(candidates):
            index[ce.key] = cid
        singles, pairs = {}, {}
        for gi in _remote_gates(circuit, host):
            g = circuit.gates[gi]
            qi, qj = g.qubits
            si, sj = _window_of(bounds[qi], g.time)[0], _window_of(bounds[qj], g.time)[0]
            singles[gi] = sorted(c for c in (index.get((qi, si, host[qj])), index.get((qj, sj, host[qi])))
                                 if c is not None)
            ps = []
            for k in range(len(network.nodes)):
                if k in (host[qi], host[qj]):
                    continue
                a, b = index.get((qi, si, k)), index.get((qj, sj, k))
                if a is not None and b is not None:
                    ps.append((min(a, b), max(a, b)))
            pairs[gi] = sorted(ps)
        return cls(circuit, host, list(candidates), singles, pairs)

    def covered_by(self, gate: int, selected) -> bool:
        return (any(c in selected for c in self.singles[gate]) or
                any(a in selected and b in selected for a, b in self.pairs[gate]))


@dataclass
class DsvcGraph:
    """Vertex-weighted, edge-weighted, vertex-costed graph; ``vertices`` are candidate ids."""
    vertices: list[int]
    weight: dict[int, float]
    cost: dict[int, float]
    edges: dict[tuple[int, int], float]

    def __post_init__(self):
        for v in self.vertices:
            if self.weight.get(v, 0) < 0 or not self.cost[v] > 0:
                raise ParameterError(f"vertex {v} needs weight >= 0 and cost > 0")
        for (a, b), w in self.edges.items():
            if w < 0 or a == b or a not in self.cost or b not in self.cost:
                raise ParameterError(f"bad edge {(a, b)}")

    def total_weight(self) -> float:
        return sum(self.weight.values()) + sum(self.edges.values())

    def density(self, subset) -> float:
        s = set(subset)
        if not s:
            return 0.0
        w = sum(self.weight.get(v, 0) for v in s)
        w += sum(x for (a, b), x in self.edges.items() if a in s and b in s)
        return w / sum(self.cost[v] for v in s)


def build_dsvc_instance(uncovered_gates, context: CeContext) -> DsvcGraph:
    """Partition each uncovered gate's unit weight onto one vertex or one edge.

    A gate coverable by a single CE credits the candidate that singly covers
    the most uncovered gates (then lower cost, then lower id); otherwise the
    lexicographically smallest covering pair gets it.
    """
    uncovered = sorted(uncovered_gates)
    single_count: dict[int, int] = {}
    for gi in uncovered:
        for c in context.singles[gi]:
            single_count[c] = single_count.get(c, 0) + 1
    weight: dict[int, float] = {}
    edges: dict[tuple[int, int], float] = {}
    for gi in uncovered:
        opts = context.singles[gi]
        if opts:
            c = min(opts, key=lambda c: (-single_count[c], context.candidates[c].cost, c))
            weight[c] = weight.get(c, 0) + 1
        elif context.pairs[gi]:
            e = context.pairs[gi][0]
            edges[e] = edges.get(e, 0) + 1
        else:
            raise InfeasibleError(f"gate {gi} has no covering CE option")
    verts = sorted(set(weight) | {v for e in edges for v in e})
    graph = DsvcGraph(verts, {v: weight.get(v, 0) for v in verts},
                      {v: context.candidates[v].cost for v in verts}, edges)
    assert math.isclose(graph.total_weight(), len(uncovered))
    return graph


def dsvc_greedy(graph: DsvcGraph) -> list[int]:
    """Peel the vertex of lowest (w(v) + incident edge weight) / c(v); keep the densest set."""
    if not graph.vertices:
        return []
    adj: dict[int, dict[int, float]] = {v: {} for v in graph.vertices}
    for (a, b), w in graph.edges.items():
        adj[a][b] = adj[a].get(b, 0) + w
        adj[b][a] = adj[b].get(a, 0) + w
    degree = {v: graph.weight.get(v, 0) + sum(adj[v].values()) for v in graph.vertices}
    alive = set(graph.vertices)
    total_w = graph.total_weight()
    total_c = math.fsum(graph.cost[v] for v in graph.vertices)
    heap = [(degree[v] / graph.cost[v], v) for v in graph.vertices]
    heapq.heapify(heap)
    best_density, best_removed = total_w / total_c, 0
    order = []
    while len(alive) > 1:
        score, v = heapq.heappop(heap)
        if v not in alive or score != degree[v] / graph.cost[v]:
            continue
        alive.remove(v)
        order.append(v)
        total_w -= degree[v]
        total_c -= graph.cost[v]
        for u, w in adj[v].items():
            if u in alive:
                degree[u] -= w
                heapq.heappush(heap, (degree[u] / graph.cost[u], u))
        density = total_w / total_c
        if density > best_density * (1 + 1e-12):
            best_density, best_removed = density, len(order)
    removed = set(order[:best_removed])
    return sorted(v for v in graph.vertices if v not in removed)


def dsvc_exact(graph: DsvcGraph, limit: int = 16) -> tuple[list[int], float]:
    """Densest induced subgraph by exhaustive enumeration (test oracle)."""
    n = len(graph.vertices)
    if n > limit:
        raise ParameterError(f"{n} vertices exceed exhaustive limit {limit}")
    best, best_d = [], 0.0
    for r in range(1, n + 1):
        for sub in itertools.combinations(graph.vertices, r):
            d = graph.density(sub)
            if d > best_d:
                best, best_d = list(sub), d
    return best, best_d


@dataclass
class CePlan:
    ces: list[CatEntanglement]
    gate_ces: dict[int, tuple[int, ...]]     # remote gate -> CE indices executing it
    demands: list[EpDemand]                  # one per CE, same index
    order: ConsumptionOrder
    num_remote_gates: int

    def to_dict(self) -> dict:
        return {"ces": [c.to_dict() for c in self.ces],
                "gate_ces": {str(g): list(cs) for g, cs in sorted(self.gate_ces.items())},
                "demands": [d.to_dict() for d in self.demands],
                "order": [list(p) for p in self.order.pairs()],
                "num_remote_gates": self.num_remote_gates}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def _assign_gates(selected, context: CeContext, remote) -> dict[int, tuple[int, ...]]:
    """Which selected candidates execute each remote gate: cheapest single, else cheapest pair."""
    sel = set(selected)
    cand = context.candidates
    out = {}
    for gi in remote:
        singles = [c for c in context.singles[gi] if c in sel]
        if singles:
            out[gi] = (min(singles, key=lambda c: (cand[c].cost, c)),)
            continue
        pairs = [p for p in context.pairs[gi] if p[0] in sel and p[1] in sel]
        if not pairs:
            raise InfeasibleError(f"gate {gi} left uncovered")
        out[gi] = min(pairs, key=lambda p: (cand[p[0]].cost + cand[p[1]].cost, p))
    return out


def _gate_time_map(circuit):
    return {gi: g.time for gi, g in enumerate(circuit.gates)}


def _split_for_capacity(ces, gate_ces, circuit, host, network):
    """Split long-lived copies until every node's live copies fit its execution memory.

    A copy is live from its first to its last served gate.  At the first
    overloaded instant, the longest-span copy alive there without a gate at
    that instant is split into the parts before and after it.
    """
    times = _gate_time_map(circuit)
    ces = list(ces)
    gate_ces = dict(gate_ces)
    while True:
        served: dict[int, list[int]] = {c: [] for c in range(len(ces))}
        for gi, cs in gate_ces.items():
            for c in cs:
                served[c].append(times[gi])
        events = []
        for c, ts in served.items():
            events.append((min(ts), 0, c))
            events.append((max(ts), 1, c))
        events.sort()
        live: dict[int, set] = {}
        overload = None
        for t, kind, c in events:
            node = ces[c].target_node
            if kind == 0:
                live.setdefault(node, set()).add(c)
                if len(live[node]) > network.nodes[node].exec_capacity:
                    overload = (t, node, set(live[node]))
                    break
            else:
                live[node].discard(c)
        if overload is None:
            return ces, gate_ces
        t, node, members = overload
        splittable = [c for c in members if min(served[c]) < t < max(served[c]) and t not in served[c]]
        if not splittable:
            raise CapacityError(f"node {node} needs more than "
                                f"{network.nodes[node].exec_capacity} execution memories at instant {t}")
        c = min(splittable, key=lambda c: (-(max(served[c]) - min(served[c])), c))
        old = ces[c]
        new_id = len(ces)
        after = min(s for s in served[c] if s > t)
        ces[c] = CatEntanglement(old.qubit, old.target_node, old.time, t, old.cost)
        ces.append(CatEntanglement(old.qubit, old.target_node, after, old.valid_until, old.cost))
        for gi, cs in gate_ces.items():
            if c in cs and times[gi] > t:
                gate_ces[gi] = tuple(sorted(new_id if x == c else x for x in cs))


def check_exec_memory(plan: CePlan, circuit: Circuit, network: QuantumNetwork) -> list[str]:
    """Instants where live copies at a node exceed its execution memory."""
    times = _gate_time_map(circuit)
    served: dict[int, list[int]] = {}
    for gi, cs in plan.gate_ces.items():
        for c in cs:
            served.setdefault(c, []).append(times[gi])
    problems = []
    for node in network.nodes:
        spans = [(min(ts), max(ts)) for c, ts in served.items() if plan.ces[c].target_node == node.id]
        for t in sorted({s for s, _ in spans}):
            live = sum(1 for s, e in spans if s <= t <= e)
            if live > node.exec_capacity:
                problems.append(f"node {node.id}: {live} live copies at instant {t}")
    return problems


def greedy_ce(circuit: Circuit, allocation: Allocation, network: QuantumNetwork,
              purify: bool = True, candidates=None) -> CePlan:
    """Cover all remote gates with CEs by repeated DSVC peeling."""
    _require_cz(circuit)
    context = CeContext.build(circuit, allocation, network, candidates)
    remote = sorted(context.singles)
    selected: set[int] = set()
    uncovered = set(remote)
    touching: dict[int, list[int]] = {}
    for gi in remote:
        for c in set(context.singles[gi]) | {c for p in context.pairs[gi] for c in p}:
            touching.setdefault(c, []).append(gi)
    while uncovered:
        graph = build_dsvc_instance(uncovered, context)
        pick = dsvc_greedy(graph)
        before = len(uncovered)
        selected.update(pick)
        for gi in {g for c in pick for g in touching.get(c, ())} & uncovered:
            if context.covered_by(gi, selected):
                uncovered.discard(gi)
        if len(uncovered) >= before:
            raise AssertionError("CE selection made no progress")
    gate_cand = _assign_gates(selected, context, remote)
    used = sorted({c for cs in gate_cand.values() for c in cs})
    renum = {c: i for i, c in enumerate(used)}
    ces = [context.candidates[c] for c in used]
    gate_ces = {gi: tuple(sorted(renum[c] for c in cs)) for gi, cs in gate_cand.items()}
    ces, gate_ces = _split_for_capacity(ces, gate_ces, circuit, context.host, network)
    return _finish_plan(ces, gate_ces, circuit, context.host, network, purify, len(remote))


def _finish_plan(ces, gate_ces, circuit, host, network, purify, num_remote) -> CePlan:
    # number CEs by their first served gate so EP ids follow circuit order
    first = {}
    for gi in sorted(gate_ces):
        for c in gate_ces[gi]:
            first.setdefault(c, gi)
    order_ids = sorted(range(len(ces)), key=lambda c: (first[c], c))
    renum = {c: i for i, c in enumerate(order_ids)}
    ces = [ces[c] for c in order_ids]
    gate_ces = {gi: tuple(sorted(renum[c] for c in cs)) for gi, cs in gate_ces.items()}
    demands = [make_demand(network, host[ce.qubit], ce.target_node, origin=("ce", i), purify=purify)
               for i, ce in enumerate(ces)]
    # each CE-EP inherits the position of the earliest gate it serves
    rep: dict[int, list[int]] = {}
    for i in range(len(ces)):
        rep.setdefault(first[order_ids[i]], []).append(i)
    order = build_consumption_order(circuit, {gi: tuple(v) for gi, v in rep.items()})
    return CePlan(ces, gate_ces, demands, order, num_remote)


def ce_total_cost(plan: CePlan) -> float:
    return math.fsum(ce.cost for ce in plan.ces)

