"""Analytic EP-generation latency: swapping trees, routing, batch sharing.

A swapping tree over a path of ``h`` links has one leaf per link.  A leaf's
latency is the expected waiting time of a geometric attempt process,
``attempt_latency / attempt_success``; an internal node costs
``f * max(left, right)`` with ``f = 3 / (2 * p_swap)``.  Unrolled, the root
latency is ``max over leaves of f**depth * leaf_latency``, which is what makes
batch latencies cheap to evaluate in closed form (see :class:`BatchOracle`).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RoutingError
from .network import QuantumNetwork, link_ep_params


@dataclass(frozen=True)
class TreeNode:
    lo: int
    hi: int
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True)
class SwappingTree:
    path: tuple[int, ...]
    root: TreeNode
    # (attempt_latency, attempt_success) per link, in path order
    leaves: tuple[tuple[float, float], ...]
    p_swap: float

    @property
    def hops(self) -> int:
        return len(self.path) - 1

    @property
    def swap_factor(self) -> float:
        return 3.0 / (2.0 * self.p_swap)

    def link_key(self, pos: int) -> tuple[int, int]:
        a, b = self.path[pos], self.path[pos + 1]
        return (min(a, b), max(a, b))

    def leaf_depths(self) -> list[tuple[int, int]]:
        """(link position, depth) for every leaf, left to right."""
        out = []
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            if node.is_leaf:
                out.append((node.lo, d))
            else:
                stack.append((node.right, d + 1))
                stack.append((node.left, d + 1))
        return out

    def depth(self) -> int:
        return max(d for _, d in self.leaf_depths())

    def internal_nodes(self) -> list[TreeNode]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                out.append(node)
                stack.extend((node.left, node.right))
        return out

    def to_dict(self) -> dict:
        def enc(node):
            if node.is_leaf:
                return node.lo
            return [enc(node.left), enc(node.right)]
        return {"path": list(self.path), "tree": enc(self.root)}


def leaf_latency(attempt_latency: float, attempt_success: float) -> float:
    return attempt_latency / attempt_success


def tree_latency(tree: SwappingTree, leaf_scale=None) -> float:
    """Root latency by the recursive rule; ``leaf_scale[pos]`` multiplies leaf ``pos``."""
    f = tree.swap_factor

    def rec(node):
        if node.is_leaf:
            lat, p = tree.leaves[node.lo]
            s = 1.0 if leaf_scale is None else leaf_scale[node.lo]
            return leaf_latency(lat, p) * s
        return f * max(rec(node.left), rec(node.right))

    return rec(tree.root)


def _split_tree(lo: int, hi: int) -> TreeNode:
    if hi - lo == 1:
        return TreeNode(lo, hi)
    mid = lo + (hi - lo + 1) // 2
    return TreeNode(lo, hi, _split_tree(lo, mid), _split_tree(mid, hi))


def balanced_tree(network: QuantumNetwork, path) -> SwappingTree:
    """Balanced complete binary tree over the links of ``path``."""
    path = tuple(path)
    if len(path) < 2:
        raise ParameterError("path needs at least one link")
    leaves = tuple(link_ep_params(network.link_between(a, b), network.params)
                   for a, b in zip(path, path[1:]))
    return SwappingTree(path, _split_tree(0, len(path) - 1), leaves, network.params.p_swap)


class RoutingTable:
    """Minimum-latency swapping trees between every node pair.

    Generalized Dijkstra (Knuth's superior-function variant) over node pairs:
    a pair is either a single link, or the swap of two finalized sub-EPs
    sharing an endpoint, costing ``f * max``.  Because ``f > 1`` the combine
    is superior, so pairs finalize in increasing latency order.  Ties keep the
    first-found option; heap keys include node ids so the result is
    deterministic.
    """

    def __init__(self, network: QuantumNetwork):
        self.network = network
        f = network.params.swap_factor
        n = network.num_nodes
        tentative = {}
        heap = []
        for link in network.links:
            lat = leaf_latency(*link_ep_params(link, network.params))
            tentative[link.key] = lat
            heap.append((lat, link.key[0], link.key[1], -1))
        heapq.heapify(heap)
        self.final: dict[tuple[int, int], tuple[float, int]] = {}
        adj: list[dict[int, float]] = [dict() for _ in range(n)]
        while heap:
            lat, a, b, split = heapq.heappop(heap)
            if (a, b) in self.final:
                continue
            self.final[(a, b)] = (lat, split)
            adj[a][b] = lat
            adj[b][a] = lat
            for u, v in ((a, b), (b, a)):
                for c, lc in list(adj[v].items()):
                    if c == u:
                        continue
                    key = (min(u, c), max(u, c))
                    if key in self.final:
                        continue
                    cand = f * max(lat, lc)
                    if cand < tentative.get(key, math.inf):
                        tentative[key] = cand
                        heapq.heappush(heap, (cand, key[0], key[1], v))
        self._trees: dict[tuple[int, int], SwappingTree] = {}

    def latency(self, a: int, b: int) -> float:
        if a == b:
            raise ParameterError("EP endpoints must differ")
        key = (min(a, b), max(a, b))
        if key not in self.final:
            raise RoutingError(f"no route between nodes {a} and {b}")
        return self.final[key][0]

    def tree(self, a: int, b: int) -> SwappingTree:
        if (a, b) not in self._trees:
            self.latency(a, b)
            path: list[int] = [a]

            def build(u, v, offset):
                _, split = self.final[(min(u, v), max(u, v))]
                if split < 0:
                    path.append(v)
                    return TreeNode(offset, offset + 1)
                left = build(u, split, offset)
                right = build(split, v, left.hi)
                return TreeNode(offset, right.hi, left, right)

            root = build(a, b, 0)
            net = self.network
            leaves = tuple(link_ep_params(net.link_between(x, y), net.params)
                           for x, y in zip(path, path[1:]))
            self._trees[(a, b)] = SwappingTree(tuple(path), root, leaves, net.params.p_swap)
        return self._trees[(a, b)]


def routing_table(network: QuantumNetwork) -> RoutingTable:
    table = network._cache.get("routing")
    if table is None:
        table = network._cache["routing"] = RoutingTable(network)
    return table


def route_ep(network: QuantumNetwork, src: int, dst: int) -> SwappingTree:
    if src == dst:
        raise ParameterError("EP endpoints must differ")
    return routing_table(network).tree(src, dst)


def ep_latency(network: QuantumNetwork, src: int, dst: int) -> float:
    return routing_table(network).latency(src, dst)


def purification_copies(path_hops: int, hops_per_copy: int = 3) -> int:
    if path_hops < 1:
        raise ParameterError("path_hops must be >= 1")
    return max(1, math.ceil(path_hops / hops_per_copy))


@dataclass(frozen=True)
class EpDemand:
    src: int
    dst: int
    multiplicity: int = 1
    origin: object = None

    def __post_init__(self):
        if self.src == self.dst:
            raise ParameterError("EP endpoints must differ")
        if self.multiplicity < 1:
            raise ParameterError("multiplicity must be >= 1")

    def to_dict(self) -> dict:
        return {"src": self.src, "dst": self.dst, "multiplicity": self.multiplicity,
                "origin": self.origin}


def make_demand(network: QuantumNetwork, src: int, dst: int, origin=None,
                purify: bool = True) -> EpDemand:
    copies = 1
    if purify:
        copies = purification_copies(route_ep(network, src, dst).hops,
                                     network.params.hops_per_copy)
    return EpDemand(src, dst, copies, origin)


@dataclass(frozen=True)
class BatchLatencyReport:
    per_ep: tuple[float, ...]
    makespan: float
    makespan_shared: float
    link_loads: dict

    def to_dict(self) -> dict:
        return {"per_ep": list(self.per_ep), "makespan": self.makespan,
                "makespan_shared": self.makespan_shared,
                "link_loads": {f"{a}-{b}": c for (a, b), c in sorted(self.link_loads.items())}}


class BatchOracle:
    """Latency(S) for subsets S of a fixed demand list.

    Each copy of each demand loads every link its tree uses; a leaf's latency
    is multiplied by its link's load.  Per demand and link, ``coef`` holds the
    largest ``f**depth * leaf_latency`` among its leaves there, so the shared
    makespan is ``max over links of load * max coef``.  The returned latency is
    capped by the sequential sum of independent latencies.
    """

    def __init__(self, network: QuantumNetwork, demands, trees=None):
        self.network = network
        self.demands = list(demands)
        if trees is None:
            trees = [route_ep(network, d.src, d.dst) for d in self.demands]
        self.trees = list(trees)
        keys = sorted({t.link_key(pos) for t in self.trees for pos in range(t.hops)})
        self.link_keys = keys
        col = {k: i for i, k in enumerate(keys)}
        n = len(self.demands)
        self.load = np.zeros((n, len(keys)))
        self.coef = np.zeros((n, len(keys)))
        self.indep = np.zeros(n)
        for i, (d, t) in enumerate(zip(self.demands, self.trees)):
            f = t.swap_factor
            for pos, depth in t.leaf_depths():
                j = col[t.link_key(pos)]
                self.load[i, j] += d.multiplicity
                self.coef[i, j] = max(self.coef[i, j], f ** depth * leaf_latency(*t.leaves[pos]))
            self.indep[i] = d.multiplicity * tree_latency(t)
        self._col = col

    def __len__(self):
        return len(self.demands)

    def shared(self, ids) -> float:
        ids = np.asarray(sorted(ids), dtype=int)
        if ids.size == 0:
            return 0.0
        return float((self.load[ids].sum(0) * self.coef[ids].max(0)).max())

    def __call__(self, ids) -> float:
        ids = np.asarray(sorted(ids), dtype=int)
        if ids.size == 0:
            return 0.0
        shared = float((self.load[ids].sum(0) * self.coef[ids].max(0)).max())
        return min(shared, float(self.indep[ids].sum()))

    def independent(self, i: int) -> float:
        return float(self.indep[i])

    def report(self, ids=None) -> BatchLatencyReport:
        """Per-EP adjusted latencies recomputed through the tree recursion."""
        ids = list(range(len(self))) if ids is None else list(ids)
        if not ids:
            raise ParameterError("batch must contain at least one demand")
        loads: dict[tuple[int, int], int] = {}
        for i in ids:
            t, m = self.trees[i], self.demands[i].multiplicity
            for pos in range(t.hops):
                k = t.link_key(pos)
                loads[k] = loads.get(k, 0) + m
        per_ep = []
        for i in ids:
            t = self.trees[i]
            per_ep.append(tree_latency(t, [loads[t.link_key(p)] for p in range(t.hops)]))
        shared = max(per_ep)
        total = math.fsum(self.indep[i] for i in ids)
        return BatchLatencyReport(tuple(per_ep), min(shared, total), shared, loads)


def batch_latency(network: QuantumNetwork, demands) -> BatchLatencyReport:
    demands = list(demands)
    if not demands:
        raise ParameterError("batch must contain at least one demand")
    return BatchOracle(network, demands).report()
