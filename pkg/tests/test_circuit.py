import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqcplan.circuit import CNOT, CZ, UNARY, Circuit, Gate, build_circuit_graph, cnot_to_cz, \
    generate_benchmark, generate_random_circuit
from dqcplan.errors import ParameterError


def test_default_random_circuit_size():
    c = generate_random_circuit(50, 50, 0.5, CZ, seed=3)
    assert len(c) == 2500
    nb = len(c.binary_gates())
    # binomial(2500, 0.5): 5 sigma is 125
    assert abs(nb - 1250) < 125


def test_zero_fraction_circuit_has_only_unary():
    c = generate_random_circuit(2, 1, 0.0, CNOT, seed=1)
    assert len(c) == 2 and not c.binary_gates()


def test_random_circuit_seed_determinism():
    assert generate_random_circuit(5, 10, 1.0, CZ, 7) == generate_random_circuit(5, 10, 1.0, CZ, 7)
    assert generate_random_circuit(5, 10, 1.0, CZ, 7) != generate_random_circuit(5, 10, 1.0, CZ, 8)


@pytest.mark.parametrize("args", [(1, 5, 0.5), (4, 5, -0.1), (4, 5, 1.5)])
def test_random_circuit_rejects_bad_parameters(args):
    with pytest.raises(ParameterError):
        generate_random_circuit(*args)


def test_gate_invariants():
    with pytest.raises(ParameterError):
        Gate(CZ, (1, 1), 0)
    with pytest.raises(ParameterError):
        Gate(UNARY, (0, 1), 0)
    with pytest.raises(ParameterError):
        Circuit(2, (Gate(UNARY, (0,), 1), Gate(UNARY, (1,), 1)))
    with pytest.raises(ParameterError):
        Circuit(2, (Gate(CZ, (0, 2), 0),))


def test_ghz():
    c = generate_benchmark("ghz", 6)
    assert c.count(UNARY) == 1 and c.gates[0].qubits == (0,)
    assert [g.qubits for g in c.gates[1:]] == [(0, i) for i in range(1, 6)]


def test_qft_cnot_count_is_twice_controlled_phase_pairs():
    for n in (2, 3, 5):
        c = generate_benchmark("qft", n)
        assert c.count(CNOT) == 2 * math.comb(n, 2)


def test_qpe_has_cnots_for_every_controlled_power():
    n = 4
    c = generate_benchmark("qpe", n)
    target = n - 1
    controls_on_target = {g.qubits[0] for g in c.gates if g.kind == CNOT and g.qubits[1] == target}
    assert controls_on_target == set(range(n - 1))


@pytest.mark.parametrize("kind,n", [("ghz", 1), ("qft", 1), ("qpe", 2), ("bogus", 5)])
def test_benchmark_rejects_bad_sizes(kind, n):
    with pytest.raises(ParameterError):
        generate_benchmark(kind, n)


def test_cnot_to_cz_examples():
    c = generate_random_circuit(4, 5, 0.0, CZ, 0)
    assert cnot_to_cz(c) is c
    single = Circuit(2, (Gate(CNOT, (0, 1), 0),))
    out = cnot_to_cz(single)
    assert [(g.kind, g.qubits, g.label) for g in out.gates] == \
        [(UNARY, (1,), "h"), (CZ, (0, 1), ""), (UNARY, (1,), "h")]
    gates = [Gate(CNOT, (i % 3, (i + 1) % 3), i) for i in range(10)] + \
        [Gate(UNARY, (0,), 10 + i, "t") for i in range(5)]
    out = cnot_to_cz(Circuit(3, tuple(gates)))
    assert out.count(CZ) == 10 and out.count(UNARY) == 25 and out.count(CNOT) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 6), st.floats(0, 1), st.integers(0, 10**6))
def test_cnot_to_cz_preserves_binary_pairs(n, gpq, frac, seed):
    c = generate_random_circuit(n, gpq, frac, CNOT, seed)
    out = cnot_to_cz(c)
    assert len(out) == len(c) + 2 * c.count(CNOT)
    assert [g.qubits for g in out.gates if g.is_binary] == [g.qubits for g in c.gates if g.is_binary]
    assert np.array_equal(build_circuit_graph(out).weights, build_circuit_graph(c).weights)


def test_circuit_graph_examples():
    only_unary = Circuit(3, tuple(Gate(UNARY, (i,), i, "x") for i in range(3)))
    assert not build_circuit_graph(only_unary).weights.any()
    gates = [Gate(CZ, (0, 1), 0), Gate(CZ, (1, 0), 1), Gate(CZ, (0, 1), 2), Gate(CZ, (1, 2), 3)]
    g = build_circuit_graph(Circuit(3, tuple(gates)))
    assert g.weight(0, 1) == g.weight(1, 0) == 3 and g.weight(1, 2) == 1 and g.weight(0, 2) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(1, 8), st.integers(0, 10**6))
def test_circuit_graph_counts_and_reordering(n, gpq, seed):
    c = generate_random_circuit(n, gpq, 0.6, CZ, seed)
    g = build_circuit_graph(c)
    assert g.total_weight() == len(c.binary_gates())
    assert np.array_equal(g.weights, g.weights.T)
    perm = np.random.default_rng(seed).permutation(len(c))
    shuffled = Circuit(n, tuple(Gate(c.gates[i].kind, c.gates[i].qubits, t, c.gates[i].label)
                                for t, i in enumerate(perm)))
    assert np.array_equal(build_circuit_graph(shuffled).weights, g.weights)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 5), st.sampled_from([CZ, CNOT]), st.integers(0, 10**6))
def test_circuit_round_trip(n, gpq, kind, seed):
    c = generate_random_circuit(n, gpq, 0.5, kind, seed)
    assert Circuit.from_dict(c.to_dict()) == c


def test_circuit_file_round_trip(tmp_path):
    c = generate_benchmark("qft", 4)
    c.save(tmp_path / "c.json")
    assert Circuit.load(tmp_path / "c.json") == c
    assert c.to_dict()["gates"][0]["kind"] == "u:h"
