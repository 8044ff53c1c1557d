"""Quantum network model: nodes, links, physical parameters, Waxman topologies."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import ModelError, ParameterError

US = 1e-6


@dataclass(frozen=True)
class NetworkParams:
    """Global physical parameters. Durations in seconds, lengths in km."""
    p_swap: float = 0.4
    t_swap: float = 10 * US
    p_optical_bsm: float = 0.3
    t_atom_photon: float = 50 * US
    p_atom_photon: float = 0.33
    tau: float = 1.0
    t_local_swap: float = 1 * US
    t_gate: float = 1 * US
    c_fiber: float = 2e5
    # exponential attenuation length for link success; None disables it
    attenuation_km: float | None = None
    hops_per_copy: int = 3

    def __post_init__(self):
        for name in ("p_swap", "p_optical_bsm", "p_atom_photon"):
            p = getattr(self, name)
            if not 0.0 < p <= 1.0:
                raise ParameterError(f"{name} must lie in (0, 1], got {p}")
        for name in ("t_swap", "t_atom_photon", "t_local_swap", "t_gate"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        if self.tau <= 0:
            raise ParameterError("tau must be positive")
        if self.c_fiber <= 0:
            raise ParameterError("c_fiber must be positive")
        if self.hops_per_copy < 1:
            raise ParameterError("hops_per_copy must be >= 1")

    @property
    def swap_factor(self) -> float:
        """Per-level latency multiplier of a swapping tree."""
        return 3.0 / (2.0 * self.p_swap)

    def with_overrides(self, **kw) -> "NetworkParams":
        return replace(self, **kw)


def grid_shape(k: int) -> tuple[int, int]:
    if k == 0:
        return (0, 0)
    rows = max(1, int(math.isqrt(k)))
    return rows, math.ceil(k / rows)


def grid_coupling_graph(memories, dims) -> nx.Graph:
    """Row-major fill of a rows x cols grid; edges join 4-neighbours."""
    rows, cols = dims
    g = nx.Graph()
    g.add_nodes_from(memories)
    cell = {}
    for idx, m in enumerate(memories):
        cell[(idx // cols, idx % cols)] = m
    for (r, c), m in cell.items():
        for nb in ((r + 1, c), (r, c + 1)):
            if nb in cell:
                g.add_edge(m, cell[nb])
    return g


@dataclass(frozen=True)
class NetworkNode:
    id: int
    x: float
    y: float
    memories: tuple[int, ...]
    grid_dims: tuple[int, int]
    exec_capacity: int = 8

    @cached_property
    def coupling_graph(self) -> nx.Graph:
        return grid_coupling_graph(self.memories, self.grid_dims)

    @cached_property
    def memory_distance(self) -> dict:
        g = self.coupling_graph
        if len(self.memories) > 1 and not nx.is_connected(g):
            raise ModelError(f"coupling graph of node {self.id} is disconnected")
        return dict(nx.all_pairs_shortest_path_length(g))


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    length_km: float

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.a, self.b), max(self.a, self.b))


@dataclass(frozen=True)
class QuantumNetwork:
    nodes: tuple[NetworkNode, ...]
    links: tuple[Link, ...]
    params: NetworkParams = NetworkParams()
    # per-instance memo tables (routing, latencies); never compared
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            raise ModelError("node ids must be 0..n-1 in order")
        seen = set()
        for link in self.links:
            if link.length_km <= 0:
                raise ModelError(f"link {link.key} must have positive length")
            if link.a == link.b or link.key in seen:
                raise ModelError(f"self-loop or duplicate link {link.key}")
            if not (0 <= link.a < len(ids) and 0 <= link.b < len(ids)):
                raise ModelError(f"link {link.key} references unknown node")
            seen.add(link.key)
        if len(self.nodes) > 1 and not nx.is_connected(self.graph):
            raise ModelError("node-level graph must be connected")

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(len(self.nodes)))
        for link in self.links:
            g.add_edge(link.a, link.b, length=link.length_km)
        return g

    @cached_property
    def link_index(self) -> dict[tuple[int, int], int]:
        return {link.key: i for i, link in enumerate(self.links)}

    def link_between(self, a: int, b: int) -> Link:
        return self.links[self.link_index[(min(a, b), max(a, b))]]

    @cached_property
    def memories(self) -> tuple[int, ...]:
        return tuple(m for n in self.nodes for m in n.memories)

    @cached_property
    def node_of(self) -> dict[int, int]:
        return {m: n.id for n in self.nodes for m in n.memories}

    def hops(self, a: int, b: int) -> int:
        return nx.shortest_path_length(self.graph, a, b)

    def to_dict(self) -> dict:
        return {
            "params": asdict(self.params),
            "nodes": [{"id": n.id, "x": n.x, "y": n.y, "memories": list(n.memories),
                       "grid_dims": list(n.grid_dims), "exec_capacity": n.exec_capacity}
                      for n in self.nodes],
            "links": [{"a": l.a, "b": l.b, "length_km": l.length_km} for l in self.links],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantumNetwork":
        nodes = tuple(NetworkNode(int(n["id"]), float(n["x"]), float(n["y"]),
                                  tuple(int(m) for m in n["memories"]),
                                  tuple(int(v) for v in n["grid_dims"]),
                                  int(n.get("exec_capacity", 8)))
                      for n in d["nodes"])
        links = tuple(Link(int(l["a"]), int(l["b"]), float(l["length_km"])) for l in d["links"])
        return cls(nodes, links, NetworkParams(**d.get("params", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "QuantumNetwork":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_network(positions, edges, memories_per_node, params=None,
                  exec_capacity=8) -> QuantumNetwork:
    """Assemble a network; memories are numbered node-major, lengths Euclidean
    unless edges carry a third element."""
    params = params or NetworkParams()
    nodes = []
    next_mem = 0
    for i, ((x, y), k) in enumerate(zip(positions, memories_per_node)):
        mems = tuple(range(next_mem, next_mem + k))
        next_mem += k
        nodes.append(NetworkNode(i, float(x), float(y), mems, grid_shape(k), exec_capacity))
    links = []
    for e in edges:
        a, b = int(e[0]), int(e[1])
        if len(e) > 2:
            length = float(e[2])
        else:
            (xa, ya), (xb, yb) = positions[a], positions[b]
            length = math.hypot(xa - xb, ya - yb)
        links.append(Link(min(a, b), max(a, b), length))
    return QuantumNetwork(tuple(nodes), tuple(links), params)


def generate_waxman(num_nodes=10, area_km=100.0, beta=0.9, alpha=0.5,
                    total_data_memories=50, seed=0, params=None,
                    exec_capacity=8) -> QuantumNetwork:
    if num_nodes < 2:
        raise ParameterError("need at least two nodes")
    if total_data_memories < 0:
        raise ParameterError("total_data_memories must be nonnegative")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.0, area_km, size=(num_nodes, 2))
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    l_max = dist.max()
    draws = rng.random((num_nodes, num_nodes))
    edges = set()
    for a in range(num_nodes):
        for b in range(a + 1, num_nodes):
            if draws[a, b] < beta * math.exp(-dist[a, b] / (alpha * l_max)):
                edges.add((a, b))
    # connect components with the shortest available pairs (Kruskal over all pairs)
    parent = list(range(num_nodes))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for a, b in edges:
        parent[find(a)] = find(b)
    pairs = sorted((dist[a, b], a, b) for a in range(num_nodes) for b in range(a + 1, num_nodes))
    for _, a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            edges.add((a, b))
    counts = rng.multinomial(total_data_memories, [1.0 / num_nodes] * num_nodes)
    positions = [tuple(p) for p in pos.tolist()]
    return build_network(positions, sorted(edges), counts.tolist(), params, exec_capacity)


def link_ep_params(link: Link, params: NetworkParams) -> tuple[float, float]:
    """(attempt latency, attempt success probability) of one link-level EP attempt.

    Both ends emit an atom-photon pair; the photons meet at an optical BSM.
    """
    latency = params.t_atom_photon + link.length_km / params.c_fiber + params.t_swap
    success = params.p_atom_photon ** 2 * params.p_optical_bsm
    if params.attenuation_km:
        success *= math.exp(-link.length_km / params.attenuation_km)
    return latency, success


@dataclass(frozen=True)
class NetworkCouplingGraph:
    """Dense symmetric weight matrix over all network memories (row = memory id)."""
    weights: np.ndarray
    node_of: tuple[int, ...]

    @property
    def num_nodes(self) -> int:
        return self.weights.shape[0]


def build_network_coupling_graph(network: QuantumNetwork, latency_oracle=None) -> NetworkCouplingGraph:
    """``latency_oracle(a, b)`` gives the independent EP latency between nodes;
    defaults to :func:`dqcplan.entanglement.ep_latency`."""
    if latency_oracle is None:
        from .entanglement import ep_latency

        def latency_oracle(a, b):
            return ep_latency(network, a, b)

    mems = network.memories
    if list(mems) != list(range(len(mems))):
        raise ModelError("memory ids must be 0..M-1")
    node_of = tuple(network.node_of[m] for m in mems)
    n_nodes = network.num_nodes
    ep = np.zeros((n_nodes, n_nodes))
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            ep[a, b] = ep[b, a] = latency_oracle(a, b)
    owner = np.array(node_of, dtype=int)
    w = ep[owner[:, None], owner[None, :]] if len(mems) else np.zeros((0, 0))
    swap = 2.0 * network.params.t_local_swap
    for node in network.nodes:
        dist = node.memory_distance
        for ma in node.memories:
            for mb in node.memories:
                if ma != mb:
                    if mb not in dist[ma]:
                        raise ModelError(f"coupling graph of node {node.id} is disconnected")
                    w[ma, mb] = swap * dist[ma][mb]
                else:
                    w[ma, mb] = 0.0
    return NetworkCouplingGraph(w, node_of)
