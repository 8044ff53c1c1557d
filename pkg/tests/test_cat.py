import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import line_network, make_circuit
from dqcplan.allocation import Allocation, allocate
from dqcplan.cat import CatEntanglement, CeContext, DsvcGraph, build_dsvc_instance, check_exec_memory, \
    coverage, dsvc_exact, dsvc_greedy, enumerate_ce_candidates, greedy_ce
from dqcplan.circuit import CNOT, CZ, Circuit, Gate, cnot_to_cz, generate_random_circuit
from dqcplan.entanglement import BatchOracle, ep_latency
from dqcplan.errors import ContractError, ParameterError
from dqcplan.network import generate_waxman
from dqcplan.scheduling import dp_schedule, validate_schedule


def _two_node():
    net = line_network(2, [2, 2])
    return net, Allocation((0, 1, 2, 3))      # q0,q1 on node 0; q2,q3 on node 1


# ------------------------------------------------------------ candidates

def test_one_remote_gate_two_nodes_has_two_candidates():
    net, alloc = _two_node()
    cands = enumerate_ce_candidates(make_circuit(4, [(0, 2)]), alloc, net)
    assert {(c.qubit, c.target_node) for c in cands} == {(0, 1), (2, 0)}


def test_one_remote_gate_three_nodes_has_four_candidates(example1):
    _, net, alloc = example1
    cands = enumerate_ce_candidates(make_circuit(5, [(0, 2)]), alloc, net)
    assert {(c.qubit, c.target_node) for c in cands} == {(0, 1), (2, 0), (0, 2), (2, 2)}
    assert all(c.cost == pytest.approx(ep_latency(net, 0, c.target_node) if c.qubit == 0
                                       else ep_latency(net, 1, c.target_node)) for c in cands)


def test_unary_gate_splits_windows():
    net, alloc = _two_node()
    circuit = make_circuit(4, [(0, 2), (0,), (0, 2)])
    cands = [c for c in enumerate_ce_candidates(circuit, alloc, net) if c.qubit == 0]
    assert [(c.time, c.valid_until) for c in cands] == [(0, 1), (2, math.inf)]
    assert cands[0].active_at(0) and not cands[0].active_at(1)


def test_cnot_circuit_rejected():
    net, alloc = _two_node()
    circuit = Circuit(4, (Gate(CNOT, (0, 2), 0),))
    with pytest.raises(ContractError):
        enumerate_ce_candidates(circuit, alloc, net)


# ------------------------------------------------------------ coverage

def test_empty_ce_set_covers_nothing(example1):
    circuit, net, alloc = example1
    assert coverage([], circuit, alloc, net) == set()


def test_one_copy_covers_every_gate_in_its_window():
    net, alloc = _two_node()
    circuit = make_circuit(4, [(0, 2), (0, 3), (1,), (0, 2), (0,), (0, 3)])
    ce = CatEntanglement(0, 1, 0, 4, 1.0)
    assert coverage([ce], circuit, alloc, net) == {0, 1, 3}


def test_pair_at_third_node_needs_both_windows(example1):
    _, net, alloc = example1
    # q0 on A, q2 on B; q2 has a unary gate at t=1, so its copy from t=0 dies there
    circuit = make_circuit(5, [(0, 2), (2,), (0, 2)])
    a = CatEntanglement(0, 2, 0, math.inf, 1.0)
    b = CatEntanglement(2, 2, 0, 1, 1.0)
    assert coverage([a, b], circuit, alloc, net) == {0}
    b2 = CatEntanglement(2, 2, 2, math.inf, 1.0)
    assert coverage([a, b, b2], circuit, alloc, net) == {0, 2}


# ------------------------------------------------------------ DSVC instance

def test_all_single_coverable_gates_give_no_edges():
    net, alloc = _two_node()
    circuit = make_circuit(4, [(0, 2), (1, 3), (0, 3)])
    ctx = CeContext.build(circuit, alloc, net)
    g = build_dsvc_instance(ctx.singles.keys(), ctx)
    assert not g.edges and g.total_weight() == 3


def test_pair_only_gate_weights_min_pair(example1):
    _, net, alloc = example1
    circuit = make_circuit(5, [(0, 2)])
    ctx = CeContext.build(circuit, alloc, net)
    # drop the single-cover candidates so only the pair at C remains
    ctx.singles[0] = []
    g = build_dsvc_instance([0], ctx)
    assert list(g.edges) == [ctx.pairs[0][0]] and g.total_weight() == 1


def test_weight_conservation_on_random_circuits():
    for seed in range(5):
        net = generate_waxman(5, total_data_memories=12, seed=seed)
        circuit = generate_random_circuit(12, 10, 0.6, CZ, seed)
        alloc = allocate(circuit, net)
        ctx = CeContext.build(circuit, alloc, net)
        g = build_dsvc_instance(ctx.singles.keys(), ctx)
        assert g.total_weight() == pytest.approx(len(ctx.singles))


# ------------------------------------------------------------ DSVC peeling

def test_dsvc_single_vertex():
    g = DsvcGraph([0], {0: 3.0}, {0: 2.0}, {})
    assert dsvc_greedy(g) == [0] and g.density([0]) == 1.5


def test_dsvc_heavy_vertex_alone():
    g = DsvcGraph([0, 1], {0: 10.0, 1: 0.0}, {0: 1.0, 1: 1.0}, {(0, 1): 1.0})
    assert dsvc_greedy(g) == [0]
    assert dsvc_exact(g) == ([0], 10.0)


def test_dsvc_validation():
    with pytest.raises(ParameterError):
        DsvcGraph([0], {0: 1.0}, {0: 0.0}, {})
    with pytest.raises(ParameterError):
        DsvcGraph([0, 1], {}, {0: 1.0, 1: 1.0}, {(0, 0): 1.0})


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(0, 10**6))
def test_dsvc_greedy_half_of_exhaustive(n, seed):
    rng = np.random.default_rng(seed)
    verts = list(range(n))
    weight = {v: float(rng.integers(0, 4)) for v in verts}
    cost = {v: float(rng.uniform(0.1, 3)) for v in verts}
    edges = {(a, b): float(rng.integers(1, 3)) for a, b in itertools.combinations(verts, 2)
             if rng.random() < 0.5}
    g = DsvcGraph(verts, weight, cost, edges)
    _, best = dsvc_exact(g)
    assert g.density(dsvc_greedy(g)) >= 0.5 * best - 1e-12


# ------------------------------------------------------------ greedy_ce

def test_no_remote_gates_no_ces():
    net, alloc = _two_node()
    plan = greedy_ce(make_circuit(4, [(0, 1), (2, 3)]), alloc, net)
    assert plan.ces == [] and plan.demands == [] and plan.num_remote_gates == 0


def test_one_remote_gate_uses_cheapest_direct_copy(example1):
    _, net, alloc = example1
    circuit = make_circuit(5, [(0, 4)])           # A -- C
    plan = greedy_ce(circuit, alloc, net)
    assert len(plan.ces) == 1
    direct = [c for c in enumerate_ce_candidates(circuit, alloc, net)
              if (c.qubit, c.target_node) in {(0, 2), (4, 0)}]
    assert plan.ces[0].cost == min(c.cost for c in direct)


def test_repeated_partner_node_saves_eps():
    net, alloc = _two_node()
    circuit = make_circuit(4, [(0, 2), (0, 3), (0, 2)])
    plan = greedy_ce(circuit, alloc, net)
    assert plan.num_remote_gates == 3 and len(plan.demands) < 3
    assert coverage(plan.ces, circuit, alloc, net) == {0, 1, 2}


def test_exec_capacity_forces_split():
    net = line_network(2, [3, 3], exec_capacity=1)
    alloc = Allocation(tuple(range(6)))
    # two qubits on node 0 each talk to node 1 twice, interleaved
    circuit = make_circuit(6, [(0, 3), (1, 4), (0, 5), (1, 3)])
    plan = greedy_ce(circuit, alloc, net)
    assert check_exec_memory(plan, circuit, net) == []
    assert coverage(plan.ces, circuit, alloc, net) == {0, 1, 2, 3}


@settings(max_examples=15, deadline=None)
@given(st.integers(4, 14), st.integers(2, 6), st.integers(0, 10**6))
def test_greedy_ce_plan_properties(nq, nodes, seed):
    net = generate_waxman(nodes, total_data_memories=nq, seed=seed)
    circuit = generate_random_circuit(nq, 8, 0.6, CNOT, seed)
    cz = cnot_to_cz(circuit)
    alloc = allocate(cz, net)
    plan = greedy_ce(cz, alloc, net)
    host = alloc.nodes(net)
    remote = {gi for gi, g in enumerate(cz.gates) if g.is_binary and host[g.qubits[0]] != host[g.qubits[1]]}
    assert len(plan.demands) <= plan.num_remote_gates == len(remote)
    assert set(plan.gate_ces) == remote
    assert coverage(plan.ces, cz, alloc, net) == remote
    assert check_exec_memory(plan, cz, net) == []
    for gi, cs in plan.gate_ces.items():
        assert all(plan.ces[c].active_at(cz.gates[gi].time) for c in cs)
    if plan.demands:
        oracle = BatchOracle(net, plan.demands)
        s = dp_schedule(range(len(plan.demands)), plan.order, math.inf, oracle)
        assert validate_schedule(s, plan.order, math.inf, oracle).ok


def test_ce_round_trip(tmp_path):
    ce = CatEntanglement(1, 2, 3, math.inf, 0.5)
    assert CatEntanglement.from_dict(ce.to_dict()) == ce
    net, alloc = _two_node()
    greedy_ce(make_circuit(4, [(0, 2), (0, 3)]), alloc, net).save(tmp_path / "ce.json")
    assert (tmp_path / "ce.json").read_text().startswith("{")
