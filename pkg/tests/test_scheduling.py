import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_circuit
from dqcplan.allocation import Allocation
from dqcplan.circuit import CZ, generate_random_circuit
from dqcplan.entanglement import BatchOracle, EpDemand
from dqcplan.errors import InfeasibleError, ParameterError
from dqcplan.network import generate_waxman
from dqcplan.scheduling import ConsumptionOrder, Schedule, brute_force_schedule, \
    build_consumption_order, derive_ep_demands, dp_schedule, greedy_schedule, validate_schedule

# Example 1 EPs e1..e8 are ids 0..7 here
E = {k: k - 1 for k in range(1, 9)}


class TableOracle:
    """Generic (non-closed-form) oracle: max of member latencies, capped by their sum."""

    def __init__(self, lat, shared=True):
        self.lat = list(lat)
        self.shared = shared

    def __call__(self, ids):
        vals = [self.lat[i] for i in ids]
        if not vals:
            return 0.0
        return max(vals) if self.shared else math.fsum(vals)


def random_order(m, rng, density):
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m) if rng.random() < density]
    return ConsumptionOrder.from_pairs(m, pairs)


def random_oracle(rng, m, nodes=6):
    net = generate_waxman(nodes, seed=int(rng.integers(1 << 30)))
    demands = []
    for _ in range(m):
        a, b = rng.choice(nodes, 2, replace=False)
        demands.append(EpDemand(int(a), int(b), int(rng.integers(1, 3))))
    return BatchOracle(net, demands)


# ------------------------------------------------------------ demands and order

def test_colocated_circuit_needs_no_eps(example1):
    _, net, _ = example1
    # memories 0 and 1 both live on node A
    demands, g2e = derive_ep_demands(make_circuit(2, [(0, 1), (1, 0)]), Allocation((0, 1)), net)
    assert demands == [] and g2e == {}


def test_example1_has_eight_demands(example1):
    circuit, net, alloc = example1
    demands, g2e = derive_ep_demands(circuit, alloc, net)
    assert len(demands) == 8
    assert g2e == {i: i for i in range(8)}
    host = alloc.nodes(net)
    assert all({d.src, d.dst} == {host[q] for q in circuit.gates[d.origin].qubits} for d in demands)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6))
def test_demand_count_equals_remote_gates(nq, seed):
    net = generate_waxman(4, total_data_memories=nq, seed=seed)
    circuit = generate_random_circuit(nq, 5, 0.6, CZ, seed)
    alloc = Allocation(tuple(np.random.default_rng(seed).permutation(nq).tolist()))
    host = alloc.nodes(net)
    remote = sum(g.is_binary and host[g.qubits[0]] != host[g.qubits[1]] for g in circuit.gates)
    assert len(derive_ep_demands(circuit, alloc, net)[0]) == remote


def test_example1_order(example1):
    circuit, net, alloc = example1
    _, g2e = derive_ep_demands(circuit, alloc, net)
    order = build_consumption_order(circuit, g2e)
    assert order.precedes(E[3], E[5])
    assert order.descendants(E[4]) == {E[6], E[7], E[8]}
    assert not order.precedes(E[5], E[3])


def test_disjoint_gates_give_empty_order():
    circuit = make_circuit(6, [(0, 1), (2, 3), (4, 5)])
    order = build_consumption_order(circuit, {0: 0, 1: 1, 2: 2})
    assert list(order.pairs()) == []


def test_order_relays_through_local_and_unary_gates():
    # EP on (0,1), local gate (1,2), EP on (2,3): the second waits for the first
    circuit = make_circuit(4, [(0, 1), (1, 2), (2,), (2, 3)])
    order = build_consumption_order(circuit, {0: 0, 3: 1})
    assert order.precedes(0, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.floats(0, 1), st.integers(0, 10**6))
def test_order_is_transitively_closed_and_acyclic(m, density, seed):
    order = random_order(m, np.random.default_rng(seed), density)
    for a in range(m):
        assert not order.precedes(a, a)
        for b in order.descendants(a):
            assert order.descendants(b) <= order.descendants(a)
            assert a in order.predecessors(b)
    topo = order.topological_order()
    pos = {e: i for i, e in enumerate(topo)}
    assert all(pos[a] < pos[b] for a, b in order.pairs())


# ------------------------------------------------------------ validator

def test_example1_three_batch_schedule_validates(example1):
    circuit, net, alloc = example1
    demands, g2e = derive_ep_demands(circuit, alloc, net)
    order = build_consumption_order(circuit, g2e)
    oracle = BatchOracle(net, demands)
    batches = ((E[1], E[2], E[3], E[4]), (E[5], E[6], E[7]), (E[8],))
    sched = Schedule(batches, tuple(oracle(b) for b in batches))
    assert validate_schedule(sched, order, net.params.tau, oracle).ok
    swapped = Schedule((batches[1], batches[0], batches[2]), sched.latencies)
    report = validate_schedule(swapped, order, net.params.tau, oracle)
    assert not report.ok and any("no-wait" in v for v in report.violations)


def test_validator_reports_partition_and_tau_problems():
    oracle = TableOracle([1.0, 2.0, 3.0])
    order = ConsumptionOrder.null(3)
    assert validate_schedule(Schedule((), ()), ConsumptionOrder.null(0), 1.0, oracle).ok
    rep = validate_schedule(Schedule(((0, 0),), (1.0,)), order, 10.0, oracle)
    assert any("appears" in v for v in rep.violations)
    assert any("missing" in v for v in rep.violations)
    rep = validate_schedule(Schedule(((0, 1, 2),), (3.0,)), order, 2.5, oracle)
    assert any("exceeds tau" in v for v in rep.violations)


# ------------------------------------------------------------ DP

def test_dp_single_ep():
    oracle = TableOracle([0.3])
    s = dp_schedule([0], ConsumptionOrder.total(1), 1.0, oracle)
    assert s.batches == ((0,),) and s.latencies == (0.3,)


def test_dp_infinite_tau_gives_single_batch_for_subadditive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = int(rng.integers(1, 9))
        oracle = TableOracle(rng.uniform(0.1, 1.0, m))     # max: subadditive and monotone
        s = dp_schedule(range(m), ConsumptionOrder.total(m), math.inf, oracle)
        assert s.batches == (tuple(range(m)),)


def test_dp_infinite_tau_matches_brute_force_with_link_sharing():
    # shared-link latency is not subadditive across a partition, so one batch
    # need not be optimal; the DP still finds the optimum
    rng = np.random.default_rng(1)
    for _ in range(20):
        m = int(rng.integers(1, 9))
        oracle = random_oracle(rng, m)
        s = dp_schedule(range(m), ConsumptionOrder.total(m), math.inf, oracle)
        bf = brute_force_schedule(range(m), ConsumptionOrder.total(m), math.inf, oracle)
        assert s.total_latency == pytest.approx(bf.total_latency, rel=1e-12)


def test_dp_matches_contiguous_partition_enumeration():
    """Independent oracle: enumerate all 2^(m-1) cut sets of the total order."""
    rng = np.random.default_rng(7)
    for _ in range(60):
        m = int(rng.integers(1, 10))
        lat = rng.uniform(0.01, 1.0, m).tolist()
        oracle = TableOracle(lat)
        tau = max(lat) * rng.uniform(1.0, 1.5)
        best = math.inf
        for mask in range(1 << (m - 1)):
            cuts = [0] + [i + 1 for i in range(m - 1) if mask >> i & 1] + [m]
            parts = [list(range(a, b)) for a, b in zip(cuts, cuts[1:])]
            lats = [oracle(p) for p in parts]
            if max(lats) <= tau:
                best = min(best, math.fsum(lats))
        s = dp_schedule(range(m), ConsumptionOrder.total(m), tau, oracle)
        assert s.total_latency == pytest.approx(best, rel=1e-12)


def test_infeasible_singleton_raises():
    with pytest.raises(InfeasibleError):
        dp_schedule([0, 1], ConsumptionOrder.null(2), 0.5, TableOracle([0.1, 0.9]))
    with pytest.raises(InfeasibleError):
        greedy_schedule([0, 1], ConsumptionOrder.null(2), 0.5, TableOracle([0.1, 0.9]))


def test_brute_force_limit():
    with pytest.raises(ParameterError):
        brute_force_schedule(range(11), ConsumptionOrder.null(11), 1.0, TableOracle([0.1] * 11))


# ------------------------------------------------------------ Greedy

def test_greedy_single_ep():
    s = greedy_schedule([0], ConsumptionOrder.null(1), 1.0, TableOracle([0.2]))
    assert s.batches == ((0,),)


@pytest.mark.parametrize("lat", [[1.0, 1.1, 1.2, 1.3], [1.0, 2.0, 3.0], [0.5, 0.5]])
def test_greedy_null_order_disjoint_paths_one_batch(lat):
    # disjoint paths: Latency(S) = max; the whole set's average max/|S| is
    # not above the cheapest single EP, so everything forms one batch
    oracle = TableOracle(lat)
    s = greedy_schedule(range(len(lat)), ConsumptionOrder.null(len(lat)), 5.0, oracle)
    assert s.batches == (tuple(range(len(lat))),)
    assert s.total_latency == max(lat)


def test_greedy_splits_when_whole_set_average_is_worse():
    s = greedy_schedule(range(2), ConsumptionOrder.null(2), 50.0, TableOracle([1.0, 10.0]))
    assert s.batches == ((0,), (1,))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.floats(0, 1), st.floats(1.0, 3.0), st.integers(0, 10**6))
def test_greedy_valid_and_bounded_by_brute_force(m, density, slack, seed):
    rng = np.random.default_rng(seed)
    oracle = random_oracle(rng, m)
    order = random_order(m, rng, density)
    tau = max(oracle([e]) for e in range(m)) * slack
    g = greedy_schedule(range(m), order, tau, oracle)
    assert validate_schedule(g, order, tau, oracle).ok
    bf = brute_force_schedule(range(m), order, tau, oracle)
    assert validate_schedule(bf, order, tau, oracle).ok
    assert bf.total_latency <= g.total_latency * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.floats(1.0, 3.0), st.integers(0, 10**6))
def test_greedy_at_least_dp_on_total_orders(m, slack, seed):
    rng = np.random.default_rng(seed)
    oracle = random_oracle(rng, m)
    order = ConsumptionOrder.total(m)
    tau = max(oracle([e]) for e in range(m)) * slack
    dp = dp_schedule(range(m), order, tau, oracle)
    g = greedy_schedule(range(m), order, tau, oracle)
    assert dp.total_latency <= g.total_latency * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 25), st.floats(0, 0.5), st.floats(1.0, 4.0), st.integers(0, 10**6))
def test_fast_paths_equal_generic(m, density, slack, seed):
    """The closed-form DP/Greedy produce exactly the batches of the generic code."""
    rng = np.random.default_rng(seed)
    oracle = random_oracle(rng, m)
    order = random_order(m, rng, density)
    tau = max(oracle([e]) for e in range(m)) * slack
    generic = lambda ids: oracle(ids)  # noqa: E731  (a plain callable disables the fast path)
    assert greedy_schedule(range(m), order, tau, oracle).batches == \
        greedy_schedule(range(m), order, tau, generic).batches
    assert dp_schedule(range(m), order, tau, oracle).batches == \
        dp_schedule(range(m), order, tau, generic).batches


def test_schedule_round_trip(tmp_path):
    s = Schedule(((0, 2), (1,)), (0.5, 0.25))
    s.save(tmp_path / "s.json", algorithm="x")
    back = Schedule.load(tmp_path / "s.json")
    assert back == s and back.total_latency == 0.75 and back.num_eps == 3
