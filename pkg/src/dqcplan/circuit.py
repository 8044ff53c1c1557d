"""Circuit representation, generators and the circuit graph."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError

UNARY = "u"
CNOT = "cnot"
CZ = "cz"

UNARY_LABELS = ("h", "x", "z", "s", "t")


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    time: int
    label: str = ""

    def __post_init__(self):
        if self.kind == UNARY:
            if len(self.qubits) != 1:
                raise ParameterError(f"unary gate needs one operand, got {self.qubits}")
        elif self.kind in (CNOT, CZ):
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise ParameterError(f"binary gate needs two distinct operands, got {self.qubits}")
        else:
            raise ParameterError(f"unknown gate kind {self.kind!r}")
        if self.time < 0:
            raise ParameterError("gate time must be nonnegative")

    @property
    def is_binary(self) -> bool:
        return self.kind != UNARY

    def to_dict(self) -> dict:
        kind = f"u:{self.label}" if self.kind == UNARY else self.kind
        return {"kind": kind, "operands": list(self.qubits), "time": self.time}

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        kind = d["kind"]
        label = ""
        if kind.startswith("u:"):
            kind, label = UNARY, kind[2:]
        return cls(kind, tuple(int(q) for q in d["operands"]), int(d["time"]), label)


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    gates: tuple[Gate, ...]

    def __post_init__(self):
        prev = -1
        for g in self.gates:
            if any(q < 0 or q >= self.num_qubits for q in g.qubits):
                raise ParameterError(f"operand out of range in {g}")
            if g.time <= prev:
                raise ParameterError("gate time instants must be strictly increasing")
            prev = g.time

    def __len__(self):
        return len(self.gates)

    def binary_gates(self) -> list[int]:
        return [i for i, g in enumerate(self.gates) if g.is_binary]

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)

    def to_dict(self) -> dict:
        return {"num_qubits": self.num_qubits, "gates": [g.to_dict() for g in self.gates]}

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(int(d["num_qubits"]), tuple(Gate.from_dict(g) for g in d["gates"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Circuit":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sequence(num_qubits, ops) -> Circuit:
    """Build a circuit from (kind, qubits, label) triples, one gate per instant."""
    gates = tuple(Gate(kind, tuple(qs), t, label) for t, (kind, qs, label) in enumerate(ops))
    return Circuit(num_qubits, gates)


def generate_random_circuit(num_qubits, gates_per_qubit, binary_fraction=0.5,
                            binary_kind=CZ, seed=0) -> Circuit:
    if num_qubits < 2:
        raise ParameterError("need at least two qubits")
    if not 0.0 <= binary_fraction <= 1.0:
        raise ParameterError("binary_fraction must lie in [0, 1]")
    if binary_kind not in (CNOT, CZ):
        raise ParameterError(f"binary_kind must be cnot or cz, got {binary_kind!r}")
    if gates_per_qubit < 0:
        raise ParameterError("gates_per_qubit must be nonnegative")
    rng = np.random.default_rng(seed)
    ops = []
    for _ in range(num_qubits * gates_per_qubit):
        if rng.random() < binary_fraction:
            a, b = rng.choice(num_qubits, size=2, replace=False)
            ops.append((binary_kind, (int(a), int(b)), ""))
        else:
            q = int(rng.integers(num_qubits))
            ops.append((UNARY, (q,), UNARY_LABELS[int(rng.integers(len(UNARY_LABELS)))]))
    return _sequence(num_qubits, ops)


def _cphase(ops, theta, control, target):
    # CP(theta) = P(theta/2) c; CX c,t; P(-theta/2) t; CX c,t; P(theta/2) t
    ops.append((UNARY, (control,), f"p({theta / 2:.6g})"))
    ops.append((CNOT, (control, target), ""))
    ops.append((UNARY, (target,), f"p({-theta / 2:.6g})"))
    ops.append((CNOT, (control, target), ""))
    ops.append((UNARY, (target,), f"p({theta / 2:.6g})"))


def _qft_ops(ops, qubits, inverse=False):
    n = len(qubits)
    sign = -1.0 if inverse else 1.0
    order = range(n - 1, -1, -1) if inverse else range(n)
    for i in order:
        if not inverse:
            ops.append((UNARY, (qubits[i],), "h"))
        for j in range(i + 1, n):
            _cphase(ops, sign * math.pi / 2 ** (j - i), qubits[j], qubits[i])
        if inverse:
            ops.append((UNARY, (qubits[i],), "h"))


def generate_benchmark(kind: str, num_qubits: int, phase: float = 1 / 3) -> Circuit:
    """GHZ ladder, QFT (no final swaps) or QPE over {unary, CNOT}.

    QPE uses qubits 0..n-2 as the counting register and qubit n-1 as the
    eigenstate of a phase gate with eigenphase ``2*pi*phase``.
    """
    ops = []
    if kind == "ghz":
        if num_qubits < 2:
            raise ParameterError("ghz needs at least 2 qubits")
        ops.append((UNARY, (0,), "h"))
        for i in range(1, num_qubits):
            ops.append((CNOT, (0, i), ""))
    elif kind == "qft":
        if num_qubits < 2:
            raise ParameterError("qft needs at least 2 qubits")
        _qft_ops(ops, list(range(num_qubits)))
    elif kind == "qpe":
        if num_qubits < 3:
            raise ParameterError("qpe needs at least 3 qubits")
        counting = list(range(num_qubits - 1))
        target = num_qubits - 1
        ops.append((UNARY, (target,), "x"))
        for q in counting:
            ops.append((UNARY, (q,), "h"))
        for k, q in enumerate(counting):
            _cphase(ops, 2 * math.pi * phase * 2 ** k, q, target)
        _qft_ops(ops, counting, inverse=True)
    else:
        raise ParameterError(f"unsupported benchmark {kind!r}")
    return _sequence(num_qubits, ops)


def cnot_to_cz(circuit: Circuit) -> Circuit:
    """Rewrite every CNOT as H(target), CZ, H(target); gates are re-timed 0..n-1."""
    if not any(g.kind == CNOT for g in circuit.gates):
        return circuit
    ops = []
    for g in circuit.gates:
        if g.kind == CNOT:
            c, t = g.qubits
            ops.append((UNARY, (t,), "h"))
            ops.append((CZ, (c, t), ""))
            ops.append((UNARY, (t,), "h"))
        else:
            ops.append((g.kind, g.qubits, g.label))
    return _sequence(circuit.num_qubits, ops)


@dataclass(frozen=True)
class CircuitGraph:
    """Symmetric matrix of binary-gate counts per qubit pair."""
    weights: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.weights.shape[0]

    def weight(self, a: int, b: int) -> int:
        return int(self.weights[a, b])

    def total_weight(self) -> int:
        return int(np.triu(self.weights, 1).sum())

    def edges(self):
        rows, cols = np.nonzero(np.triu(self.weights, 1))
        return [(int(a), int(b), int(self.weights[a, b])) for a, b in zip(rows, cols)]


def build_circuit_graph(circuit: Circuit) -> CircuitGraph:
    counts = Counter(tuple(sorted(g.qubits)) for g in circuit.gates if g.is_binary)
    w = np.zeros((circuit.num_qubits, circuit.num_qubits), dtype=np.int64)
    for (a, b), c in counts.items():
        w[a, b] = w[b, a] = c
    return CircuitGraph(w)
