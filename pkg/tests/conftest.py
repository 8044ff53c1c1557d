import numpy as np
import pytest

from dqcplan.allocation import Allocation
from dqcplan.circuit import CZ, UNARY, Circuit, Gate
from dqcplan.network import NetworkParams, build_network

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def make_circuit(num_qubits, ops):
    """ops: list of (q,) for unary or (a, b) for CZ, one per time instant."""
    gates = []
    for t, qs in enumerate(ops):
        if len(qs) == 1:
            gates.append(Gate(UNARY, tuple(qs), t, "h"))
        else:
            gates.append(Gate(CZ, tuple(qs), t))
    return Circuit(num_qubits, tuple(gates))


def line_network(n, memories, length=10.0, params=None, exec_capacity=8):
    pos = [(i * length, 0.0) for i in range(n)]
    edges = [(i, i + 1) for i in range(n - 1)]
    return build_network(pos, edges, memories, params or NetworkParams(), exec_capacity)


@pytest.fixture
def example1():
    """Three computers A={q0,q1}, B={q2,q3}, C={q4} and eight remote gates g1..g8."""
    circuit = make_circuit(5, [(0, 2), (1, 4), (0, 3), (1, 3), (0, 4), (1, 2), (3, 4), (2, 4)])
    pos = [(0.0, 0.0), (30.0, 0.0), (15.0, 25.0)]
    network = build_network(pos, [(0, 1), (1, 2), (0, 2)], [2, 2, 1])
    allocation = Allocation((0, 1, 2, 3, 4))
    return circuit, network, allocation


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
