"""Batching required EPs under a decoherence deadline (GED problem).

A schedule is an ordered list of batches; batches are generated one after
another and each must have latency at most ``tau``.  Schedules returned here
satisfy the no-wait property: if ``a`` must be consumed before ``b`` then
``a``'s batch is not later than ``b``'s, so total time is the sum of the
batch latencies.

Latency oracles are callables mapping a collection of EP ids to a duration.
When the oracle is an :class:`~dqcplan.entanglement.BatchOracle` the DP and
Greedy use vectorised closed-form evaluations that produce the same batches
as the generic code paths.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import Allocation
from .circuit import Circuit
from .entanglement import BatchOracle, make_demand
from .errors import InfeasibleError, ParameterError
from .network import QuantumNetwork

REL_TOL = 1e-12


def _less(a: float, b: float) -> bool:
    """Strictly smaller beyond float noise."""
    return a < b and not math.isclose(a, b, rel_tol=REL_TOL, abs_tol=0.0)


def _better(avg: float, size: int, best_avg: float, best_size: int) -> bool:
    """Lower average latency wins; equal averages prefer the larger batch."""
    if _less(avg, best_avg):
        return True
    return size > best_size and not _less(best_avg, avg)


def derive_ep_demands(circuit: Circuit, allocation: Allocation, network: QuantumNetwork,
                      purify: bool = True):
    """One EP per remote binary gate (telegate mode).

    Returns ``(demands, gate_to_ep)`` where ``gate_to_ep`` maps gate index to
    EP id; EP ids follow circuit order.
    """
    host = allocation.nodes(network)
    demands, gate_to_ep = [], {}
    for gi, g in enumerate(circuit.gates):
        if not g.is_binary:
            continue
        a, b = host[g.qubits[0]], host[g.qubits[1]]
        if a != b:
            gate_to_ep[gi] = len(demands)
            demands.append(make_demand(network, a, b, origin=gi, purify=purify))
    return demands, gate_to_ep


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass
class ConsumptionOrder:
    """Strict partial order over EP ids ``0..n-1`` stored as bitsets."""
    n: int
    succ: list[list[int]]          # base (covering-ish) relation
    desc: list[int] = field(default_factory=list)
    pred: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.desc:
            self._close()

    def _close(self):
        topo = self.topological_order()
        desc = [0] * self.n
        for e in reversed(topo):
            m = 0
            for s in self.succ[e]:
                m |= (1 << s) | desc[s]
            desc[e] = m
        pred = [0] * self.n
        for e in range(self.n):
            for d in _bits(desc[e]):
                pred[d] |= 1 << e
        if any(desc[e] >> e & 1 for e in range(self.n)):
            raise AssertionError("consumption order is not irreflexive")
        self.desc, self.pred = desc, pred

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "ConsumptionOrder":
        succ = [[] for _ in range(n)]
        for a, b in pairs:
            succ[a].append(b)
        return cls(n, [sorted(set(s)) for s in succ])

    @classmethod
    def total(cls, n: int) -> "ConsumptionOrder":
        return cls.from_pairs(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def null(cls, n: int) -> "ConsumptionOrder":
        return cls(n, [[] for _ in range(n)])

    def precedes(self, a: int, b: int) -> bool:
        return bool(self.desc[a] >> b & 1)

    def descendants(self, e: int) -> set[int]:
        return set(_bits(self.desc[e]))

    def predecessors(self, e: int) -> set[int]:
        return set(_bits(self.pred[e]))

    def pairs(self):
        return [(a, b) for a in range(self.n) for b in _bits(self.desc[a])]

    def is_total(self) -> bool:
        return all(bin(self.desc[e]).count("1") + bin(self.pred[e]).count("1") == self.n - 1
                   for e in range(self.n))

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, lowest id first among ready elements."""
        indeg = [0] * self.n
        for e in range(self.n):
            for s in self.succ[e]:
                indeg[s] += 1
        ready = [e for e in range(self.n) if indeg[e] == 0]
        heapq.heapify(ready)
        out = []
        while ready:
            e = heapq.heappop(ready)
            out.append(e)
            for s in self.succ[e]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    heapq.heappush(ready, s)
        if len(out) != self.n:
            raise AssertionError("consumption order contains a cycle")
        return out

    def matrix(self, ids=None) -> np.ndarray:
        """Boolean matrix M[i, j] = ids[j] is ids[i] or a descendant of it."""
        ids = list(range(self.n)) if ids is None else list(ids)
        nbytes = (self.n + 7) // 8
        full = np.zeros((len(ids), self.n), dtype=bool)
        for r, e in enumerate(ids):
            m = self.desc[e] | (1 << e)
            row = np.frombuffer(m.to_bytes(nbytes, "little"), dtype=np.uint8)
            full[r] = np.unpackbits(row, bitorder="little")[:self.n].astype(bool)
        return full[:, ids]


def build_consumption_order(circuit: Circuit, gate_to_ep: dict) -> ConsumptionOrder:
    """EP a precedes EP b when a's gate must run before b's gate.

    The base relation links EPs of gates that share an operand, the earlier
    gate's EP first.  Gates without EPs (unary or local gates) relay the
    relation: a chain of gates, each sharing an operand with the next, orders
    the EPs at its ends.  ``gate_to_ep`` maps a gate index to one EP id or a
    tuple of EP ids that are all consumed by that gate.
    """
    as_sets = {gi: (v,) if isinstance(v, (int, np.integer)) else tuple(v)
               for gi, v in gate_to_ep.items()}
    n = len({e for v in as_sets.values() for e in v})
    frontier: dict[int, frozenset] = {}      # qubit -> latest EPs its state depends on
    succ = [set() for _ in range(n)]
    for gi, g in enumerate(circuit.gates):
        before = frozenset().union(*(frontier.get(q, frozenset()) for q in g.qubits))
        cur = as_sets.get(gi)
        if cur:
            for prev in before:
                for e in cur:
                    if prev != e:
                        succ[prev].add(e)
            after = frozenset(cur)
        else:
            after = before
        for q in g.qubits:
            frontier[q] = after
    return ConsumptionOrder(n, [sorted(s) for s in succ])


@dataclass(frozen=True)
class Schedule:
    batches: tuple[tuple[int, ...], ...]
    latencies: tuple[float, ...]

    @property
    def total_latency(self) -> float:
        return math.fsum(self.latencies)

    @property
    def num_eps(self) -> int:
        return sum(len(b) for b in self.batches)

    def to_dict(self) -> dict:
        return {"batches": [{"eps": list(b), "latency": l} for b, l in zip(self.batches, self.latencies)],
                "total_latency": self.total_latency}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(tuple(tuple(int(e) for e in b["eps"]) for b in d["batches"]),
                   tuple(float(b["latency"]) for b in d["batches"]))

    def save(self, path, **extra) -> None:
        Path(path).write_text(json.dumps({**extra, **self.to_dict()}, indent=1))

    @classmethod
    def load(cls, path) -> "Schedule":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _make_schedule(batches, latency_oracle) -> Schedule:
    batches = tuple(tuple(sorted(int(e) for e in b)) for b in batches)
    return Schedule(batches, tuple(float(latency_oracle(b)) for b in batches))


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str]

    def __bool__(self):
        return self.ok


def validate_schedule(schedule: Schedule, order: ConsumptionOrder, tau: float,
                      latency_oracle, eps=None) -> ValidationReport:
    """Partition completeness, per-batch latency <= tau, and no-wait."""
    eps = set(range(order.n)) if eps is None else set(eps)
    problems = []
    seen: dict[int, int] = {}
    for k, batch in enumerate(schedule.batches):
        if not batch:
            problems.append(f"batch {k} is empty")
        for e in batch:
            if e in seen:
                problems.append(f"EP {e} appears in batches {seen[e]} and {k}")
            seen[e] = k
    missing = eps - set(seen)
    extra = set(seen) - eps
    if missing:
        problems.append(f"EPs missing from schedule: {sorted(missing)[:10]}")
    if extra:
        problems.append(f"unknown EPs in schedule: {sorted(extra)[:10]}")
    for k, batch in enumerate(schedule.batches):
        lat = latency_oracle(batch) if batch else 0.0
        if lat > tau * (1 + REL_TOL):
            problems.append(f"batch {k} latency {lat:.6g} exceeds tau {tau:.6g}")
    earlier = 0
    for k, batch in enumerate(schedule.batches):
        for e in batch:
            if e < order.n and order.pred[e] & ~earlier & ~_mask(batch):
                bad = [p for p in _bits(order.pred[e]) if seen.get(p, -1) > k]
                if bad:
                    problems.append(f"no-wait violated: EP {bad[0]} precedes EP {e} "
                                    f"but is generated in a later batch")
        earlier |= _mask(batch)
    return ValidationReport(not problems, problems)


def _mask(ids) -> int:
    m = 0
    for e in ids:
        m |= 1 << e
    return m


def _check_singletons(eps, tau, latency_oracle):
    for e in eps:
        lat = latency_oracle([e])
        if lat > tau * (1 + REL_TOL):
            raise InfeasibleError(f"EP {e} alone needs {lat:.6g} > tau = {tau:.6g}")


def _is_fast(latency_oracle) -> bool:
    return isinstance(latency_oracle, BatchOracle)


# ---------------------------------------------------------------- DP

def dp_schedule(eps, order: ConsumptionOrder, tau: float, latency_oracle) -> Schedule:
    """Optimal contiguous partition of a topological linearization."""
    eps = sorted(eps)
    if not eps:
        return Schedule((), ())
    _check_singletons(eps, tau, latency_oracle)
    keep = set(eps)
    lin = [e for e in order.topological_order() if e in keep] if order.n else eps
    if len(lin) != len(eps):
        lin = [e for e in order.topological_order() if e in keep] + sorted(keep - set(range(order.n)))
    m = len(lin)
    best = np.full(m + 1, math.inf)
    best[0] = 0.0
    back = np.zeros(m + 1, dtype=int)
    for j in range(m):
        lats = (_slice_latencies_fast(latency_oracle, lin, j) if _is_fast(latency_oracle)
                else np.array([latency_oracle(lin[i:j + 1]) for i in range(j + 1)]))
        cand = best[:j + 1] + lats
        cand[lats > tau * (1 + REL_TOL)] = math.inf
        i = _first_min(cand)
        best[j + 1], back[j + 1] = cand[i], i
    batches = []
    j = m
    while j > 0:
        i = back[j]
        batches.append(lin[i:j])
        j = i
    return _make_schedule(reversed(batches), latency_oracle)


def _slice_latencies_fast(oracle: BatchOracle, lin, j) -> np.ndarray:
    """Latency of lin[i..j] for every i <= j."""
    rows = np.asarray(lin[:j + 1])
    load = oracle.load[rows]
    coef = oracle.coef[rows]
    indep = oracle.indep[rows]
    suffix_load = np.cumsum(load[::-1], axis=0)[::-1]
    suffix_coef = np.maximum.accumulate(coef[::-1], axis=0)[::-1]
    suffix_indep = np.cumsum(indep[::-1])[::-1]
    shared = (suffix_load * suffix_coef).max(axis=1) if load.shape[1] else np.zeros(j + 1)
    return np.minimum(shared, suffix_indep)


# ---------------------------------------------------------------- Greedy

def greedy_schedule(eps, order: ConsumptionOrder, tau: float, latency_oracle) -> Schedule:
    """Iterative lowest-average-latency batches built by peeling.

    Each batch starts as the lowest-latency minimal EP.  Candidate sets are
    obtained by repeatedly removing the EP (with its descendants) whose
    removal minimises the remaining set's average latency; the best feasible
    set seen becomes the batch, larger sets winning ties.  The initial
    remaining set is itself a candidate.
    """
    eps = sorted(eps)
    if not eps:
        return Schedule((), ())
    _check_singletons(eps, tau, latency_oracle)
    if _is_fast(latency_oracle):
        batches = _greedy_fast(eps, order, tau, latency_oracle)
    else:
        batches = _greedy_generic(eps, order, tau, latency_oracle)
    return _make_schedule(batches, latency_oracle)


def _desc_in(order: ConsumptionOrder, e: int, within: set) -> set:
    if e >= order.n:
        return set()
    return {d for d in _bits(order.desc[e]) if d in within}


def _greedy_generic(eps, order, tau, latency):
    remaining = set(eps)
    batches = []
    while remaining:
        minimal = [e for e in sorted(remaining) if not (_desc_pred(order, e) & remaining)]
        single = {e: latency([e]) for e in minimal}
        e0 = minimal[_first_min([single[e] for e in minimal])]
        best, best_avg = {e0}, single[e0]
        cur = set(remaining)
        lat_cur = latency(sorted(cur))
        if lat_cur <= tau * (1 + REL_TOL) and _better(lat_cur / len(cur), len(cur), best_avg, 1):
            best, best_avg = set(cur), lat_cur / len(cur)
        while cur:
            options = []
            for e in sorted(cur):
                rest = cur - {e} - _desc_in(order, e, cur)
                lat = latency(sorted(rest)) if rest else 0.0
                options.append((lat / len(rest) if rest else math.inf, rest, lat))
            choice_score, cur, choice_lat = options[_first_min([o[0] for o in options])]
            if cur and choice_lat <= tau * (1 + REL_TOL) and \
                    _better(choice_score, len(cur), best_avg, len(best)):
                best, best_avg = set(cur), choice_score
        batches.append(sorted(best))
        remaining -= best
    return batches


def _desc_pred(order, e):
    return set(_bits(order.pred[e])) if e < order.n else set()


def _greedy_fast(eps, order, tau, oracle: BatchOracle):
    """Vectorised twin of :func:`_greedy_generic` for closed-form oracles.

    For every candidate the features of its removal set (loads, independent
    latency sum, size, and per-link counts of each distinct coefficient
    level) are kept in a matrix ``R`` and updated incrementally, so scoring
    all candidates costs O(n * features) per peel.
    """
    eps = np.asarray(eps)
    n_links = oracle.load.shape[1]
    # coefficient levels per link -> one-hot group features
    g_link, g_val = [], []
    for col in range(n_links):
        for v in np.unique(oracle.coef[eps, col]):
            if v > 0:
                g_link.append(col)
                g_val.append(v)
    g_link = np.asarray(g_link, dtype=int)
    g_val = np.asarray(g_val)

    def features(ids):
        load = oracle.load[ids]
        onehot = (oracle.coef[ids][:, g_link] == g_val[None, :]).astype(float) if len(g_link) \
            else np.zeros((len(ids), 0))
        return np.hstack([load, oracle.indep[ids][:, None], np.ones((len(ids), 1)), onehot])

    def latency_rows(feat):
        """Latency and size of the sets whose feature sums are the rows of ``feat``."""
        load = feat[:, :n_links]
        indep = feat[:, n_links]
        size = feat[:, n_links + 1]
        present = feat[:, n_links + 2:] > 0.5
        if len(g_link):
            # load * (largest present level) per link == max over present levels of load * level
            shared = np.where(present, load[:, g_link] * g_val[None, :], 0.0).max(axis=1)
        else:
            shared = np.zeros(feat.shape[0])
        return np.minimum(shared, indep), size

    dmat_all = order.matrix(eps.tolist()) if order.n else np.eye(len(eps), dtype=bool)
    all_single, _ = latency_rows(features(eps))
    remaining = np.ones(len(eps), dtype=bool)
    batches = []
    while remaining.any():
        idx = np.flatnonzero(remaining)
        ids = eps[idx]
        n = len(idx)
        dmat = dmat_all[np.ix_(idx, idx)]
        feat = features(ids)
        # minimal elements: nothing else in the remaining set precedes them
        has_pred = (dmat.sum(axis=0) > 1)
        single_lat = all_single[idx]
        minimal = np.flatnonzero(~has_pred)
        e0 = minimal[_first_min(single_lat[minimal])]
        best, best_avg = np.zeros(n, dtype=bool), single_lat[e0]
        best[e0] = True
        cur = np.ones(n, dtype=bool)
        total = feat.sum(axis=0)
        lat_cur = oracle(ids)
        if lat_cur <= tau * (1 + REL_TOL) and _better(lat_cur / n, n, best_avg, 1):
            best, best_avg = cur.copy(), lat_cur / n
        dm = dmat.astype(float)
        removed = dm @ feat
        cand = np.arange(n)
        while cand.size:
            lat, size = latency_rows(total[None, :] - removed)
            with np.errstate(divide="ignore", invalid="ignore"):
                sc = np.where(size > 0.5, lat / np.maximum(size, 1.0), math.inf)
            k = _first_min(sc)
            gone = dmat[cand[k]] & cur
            gone_idx = np.flatnonzero(gone)
            cur &= ~gone
            keep = cur[cand]
            cand = cand[keep]
            removed = removed[keep] - dm[np.ix_(cand, gone_idx)] @ feat[gone_idx]
            total = total - feat[gone_idx].sum(axis=0)
            if cand.size and lat[k] <= tau * (1 + REL_TOL) and \
                    _better(sc[k], int(size[k]), best_avg, int(best.sum())):
                best, best_avg = cur.copy(), sc[k]
        batches.append(sorted(ids[best].tolist()))
        remaining[idx[best]] = False
    return batches


def _first_min(values) -> int:
    """Lowest index whose value ties the minimum within relative tolerance."""
    values = np.asarray(values, dtype=float)
    m = values.min()
    if not math.isfinite(m):
        return int(np.argmin(values))
    return int(np.flatnonzero(values <= m + REL_TOL * abs(m))[0])


# ---------------------------------------------------------------- brute force

def brute_force_schedule(eps, order: ConsumptionOrder, tau: float, latency_oracle,
                         limit: int = 10) -> Schedule:
    """Minimum total latency over all no-wait, tau-feasible ordered partitions."""
    eps = sorted(eps)
    if len(eps) > limit:
        raise ParameterError(f"{len(eps)} EPs exceed brute-force limit {limit}")
    if not eps:
        return Schedule((), ())
    _check_singletons(eps, tau, latency_oracle)
    m = len(eps)
    pos = {e: i for i, e in enumerate(eps)}
    pred = [0] * m
    for i, e in enumerate(eps):
        if e < order.n:
            for p in _bits(order.pred[e]):
                if p in pos:
                    pred[i] |= 1 << pos[p]
    topo = [pos[e] for e in order.topological_order() if e in pos] if order.n else list(range(m))
    topo += [i for i in range(m) if i not in set(topo)]
    lat_cache: dict[int, float] = {}

    def lat(mask):
        if mask not in lat_cache:
            lat_cache[mask] = latency_oracle([eps[i] for i in _bits(mask)])
        return lat_cache[mask]

    def ideals(rem):
        """Nonempty subsets of ``rem`` closed under predecessors within ``rem``."""
        items = [i for i in topo if rem >> i & 1]
        out = []

        def rec(k, chosen):
            if k == len(items):
                if chosen:
                    out.append(chosen)
                return
            i = items[k]
            rec(k + 1, chosen)
            if pred[i] & rem & ~chosen == 0:
                rec(k + 1, chosen | (1 << i))

        rec(0, 0)
        return out

    memo: dict[int, tuple[float, tuple[int, ...]]] = {0: (0.0, ())}

    def best(rem):
        if rem in memo:
            return memo[rem]
        result = (math.inf, ())
        for b in sorted(ideals(rem)):
            lb = lat(b)
            if lb > tau * (1 + REL_TOL):
                continue
            tail_cost, tail = best(rem & ~b)
            cost = lb + tail_cost
            if _less(cost, result[0]):
                result = (cost, (b,) + tail)
        memo[rem] = result
        return result

    cost, masks = best((1 << m) - 1)
    if not masks:
        raise InfeasibleError("no feasible schedule")
    return _make_schedule([[eps[i] for i in _bits(b)] for b in masks], latency_oracle)
