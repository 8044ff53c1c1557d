"""Static qubit allocation by reduction to metric max-QAP plus local search."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .circuit import Circuit, CircuitGraph, build_circuit_graph
from .errors import CapacityError, ContractError, ParameterError
from .network import NetworkCouplingGraph, QuantumNetwork, build_network_coupling_graph


@dataclass(frozen=True)
class Allocation:
    """``eta[q]`` is the network memory holding circuit qubit ``q``."""
    eta: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.eta)) != len(self.eta):
            raise ContractError("allocation must be one-to-one")

    def __getitem__(self, q):
        return self.eta[q]

    def __len__(self):
        return len(self.eta)

    def nodes(self, network: QuantumNetwork) -> tuple[int, ...]:
        """Hosting node of every qubit."""
        return tuple(network.node_of[m] for m in self.eta)

    def to_dict(self, network: QuantumNetwork) -> dict:
        return {str(q): [network.node_of[m], m] for q, m in enumerate(self.eta)}

    @classmethod
    def from_dict(cls, d: dict) -> "Allocation":
        return cls(tuple(int(d[str(q)][1]) for q in range(len(d))))

    def save(self, path, network: QuantumNetwork) -> None:
        Path(path).write_text(json.dumps(self.to_dict(network), indent=1))

    @classmethod
    def load(cls, path) -> "Allocation":
        return cls.from_dict(json.loads(Path(path).read_text()))


def allocation_cost(circuit_graph: CircuitGraph, coupling_graph: NetworkCouplingGraph, eta) -> float:
    """Sum over unordered qubit pairs of gate count times memory-pair weight."""
    eta = np.asarray(getattr(eta, "eta", eta), dtype=int)
    if len(set(eta.tolist())) != len(eta):
        raise ContractError("allocation must be one-to-one")
    if len(eta) != circuit_graph.num_nodes:
        raise ContractError("allocation must cover every circuit qubit")
    sub = coupling_graph.weights[np.ix_(eta, eta)]
    return float(np.triu(circuit_graph.weights * sub, 1).sum())


@dataclass(frozen=True)
class QapInstance:
    flow: np.ndarray       # complemented, padded circuit graph
    dist: np.ndarray       # network-coupling weights
    big_m: float
    num_real: int          # qubits 0..num_real-1 are real, the rest dummies


def pad_and_complement(circuit_graph: CircuitGraph, coupling_graph: NetworkCouplingGraph) -> QapInstance:
    k, n = circuit_graph.num_nodes, coupling_graph.num_nodes
    if k > n:
        raise CapacityError(f"{k} circuit qubits exceed {n} network memories")
    big_m = float(circuit_graph.total_weight())
    flow = np.zeros((n, n))
    flow[:k, :k] = big_m - circuit_graph.weights
    np.fill_diagonal(flow, 0.0)
    return QapInstance(flow, coupling_graph.weights.copy(), big_m, k)


def qap_objective(flow: np.ndarray, dist: np.ndarray, perm) -> float:
    perm = np.asarray(perm, dtype=int)
    return float(np.triu(flow * dist[np.ix_(perm, perm)], 1).sum())


def _greedy_matching(w: np.ndarray, nodes) -> list[tuple[int, int]]:
    """Heaviest-edge-first matching; ties by lowest (i, j)."""
    nodes = list(nodes)
    edges = sorted(((-w[a, b], a, b) for i, a in enumerate(nodes) for b in nodes[i + 1:]))
    used, out = set(), []
    for _, a, b in edges:
        if a not in used and b not in used:
            used.update((a, b))
            out.append((a, b))
    return out


def matching_seed(inst: QapInstance) -> np.ndarray:
    """Map heaviest flow pairs onto heaviest distance pairs, in rank order.

    This mirrors the matching-on-matching structure of the metric max-QAP
    4-approximation; leftover qubits take leftover memories by index.
    """
    n = inst.flow.shape[0]
    flow_match = _greedy_matching(inst.flow, range(n))
    dist_match = _greedy_matching(inst.dist, range(n))
    perm = np.full(n, -1, dtype=int)
    for (qa, qb), (ma, mb) in zip(flow_match, dist_match):
        perm[qa], perm[qb] = ma, mb
    free = [m for m in range(n) if m not in set(perm.tolist())]
    for q in range(n):
        if perm[q] < 0:
            perm[q] = free.pop(0)
    return perm


def constructive_seed(w: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Place qubits heaviest-first, each on the free memory of least added cost.

    The first qubit is tried on every memory and the cheapest build is kept;
    later ties go to the lowest memory id.
    """
    n = w.shape[0]
    order = sorted(range(n), key=lambda q: (-w[q].sum(), q))
    best, best_cost = None, np.inf
    for start in range(n):
        perm = np.full(n, -1, dtype=int)
        free = np.ones(n, dtype=bool)
        perm[order[0]], free[start] = start, False
        for k, q in enumerate(order[1:], 1):
            placed = order[:k]
            added = d[:, perm[placed]] @ w[q, placed]
            added[~free] = np.inf
            m = int(np.argmin(added))
            perm[q], free[m] = m, False
        cost = qap_objective(w, d, perm)
        if cost < best_cost:
            best, best_cost = perm, cost
    return best


def swap_deltas(w: np.ndarray, d: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Cost change of exchanging the memories of every pair (a, b).

    ``w`` and ``d`` are symmetric with zero diagonal; the cost is the
    upper-triangle sum of ``w * d[perm][:, perm]``.
    """
    p = d[np.ix_(perm, perm)]
    g = w @ p
    diag = np.diag(g)
    delta = g + g.T - diag[:, None] - diag[None, :] + 2.0 * w * p
    np.fill_diagonal(delta, 0.0)
    return delta


def local_search(w: np.ndarray, d: np.ndarray, perm, max_iter: int = 100000) -> np.ndarray:
    """Best-improvement 2-swap descent until no transposition lowers the cost."""
    perm = np.array(perm, dtype=int)
    n = len(perm)
    if n < 2:
        return perm
    scale = max(float(np.abs(w).sum() * np.abs(d).max()), 1e-300)
    tol = 1e-12 * scale
    for _ in range(max_iter):
        delta = swap_deltas(w, d, perm)
        iu = np.triu_indices(n, 1)
        vals = delta[iu]
        k = int(np.argmin(vals))  # first minimum = lowest (a, b)
        if vals[k] >= -tol:
            break
        a, b = iu[0][k], iu[1][k]
        perm[a], perm[b] = perm[b], perm[a]
    return perm


def _padded_flow(circuit_graph: CircuitGraph, n: int) -> np.ndarray:
    k = circuit_graph.num_nodes
    w = np.zeros((n, n))
    w[:k, :k] = circuit_graph.weights
    return w


def allocate(circuit: Circuit, network: QuantumNetwork, coupling=None) -> Allocation:
    """Best of two seeds (max-QAP matching, greedy constructive), each refined
    by 2-swap descent on cost; ties keep the matching seed."""
    cg = build_circuit_graph(circuit)
    coupling = coupling or build_network_coupling_graph(network)
    inst = pad_and_complement(cg, coupling)
    w = _padded_flow(cg, inst.dist.shape[0])
    best, best_cost = None, np.inf
    for seed in (matching_seed(inst), constructive_seed(w, inst.dist)):
        perm = local_search(w, inst.dist, seed)
        cost = qap_objective(w, inst.dist, perm)
        if cost < best_cost:
            best, best_cost = perm, cost
    return Allocation(tuple(int(m) for m in best[:inst.num_real]))


def allocate_exact(circuit: Circuit, network: QuantumNetwork, limit: int = 8, coupling=None) -> Allocation:
    """Exhaustive minimum-cost allocation; refuses instances above ``limit`` memories."""
    cg = build_circuit_graph(circuit)
    coupling = coupling or build_network_coupling_graph(network)
    n, k = coupling.num_nodes, cg.num_nodes
    if k > n:
        raise CapacityError(f"{k} circuit qubits exceed {n} network memories")
    if n > limit:
        raise ParameterError(f"instance with {n} memories exceeds exhaustive limit {limit}")
    if k == 0:
        return Allocation(())
    perms = np.array(list(itertools.permutations(range(n), k)), dtype=int)
    iu = np.triu_indices(k, 1)
    costs = coupling.weights[perms[:, iu[0]], perms[:, iu[1]]] @ cg.weights[iu].astype(float)
    best = perms[int(np.argmin(costs))]
    return Allocation(tuple(int(m) for m in best))


def random_allocation(num_qubits: int, network: QuantumNetwork, rng) -> Allocation:
    mems = np.asarray(network.memories)
    if num_qubits > len(mems):
        raise CapacityError(f"{num_qubits} circuit qubits exceed {len(mems)} network memories")
    return Allocation(tuple(int(m) for m in rng.permutation(mems)[:num_qubits]))
