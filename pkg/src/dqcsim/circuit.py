"""Circuit representations, the logical-qubit map and partitioning.

Two flavours of gate tuple are accepted, mirroring how circuits are written
by hand:

* monolithic: ``(gate, q0, q1, ...)`` over global qubit indices;
* distributed: ``(gate, pos0, node0, pos1, node1, ..., scheme)`` where the
  scheme is only present when the operands live on different nodes. INIT
  may take a list of positions: ``(INIT, [2, 3, 4], "node_0")``.

Distributed circuits are plain lists of :class:`DistributedGate`. A logical
qubit of a distributed circuit is identified by the ``(node, position)``
where it first appears.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

from .qstate import GateSpec

# gate constants, so tuples read like ``(H, 2, "node_0")``
H = GateSpec("H")
X = GateSpec("X")
Y = GateSpec("Y")
Z = GateSpec("Z")
S = GateSpec("S")
T = GateSpec("T")
CNOT = GateSpec("CNOT")
CZ = GateSpec("CZ")
SWAP = GateSpec("SWAP")
INIT = GateSpec("INIT")
MEASURE = GateSpec("MEASURE")


def RX(theta: float) -> GateSpec:
    return GateSpec("RX", (theta,))


def RY(theta: float) -> GateSpec:
    return GateSpec("RY", (theta,))


def RZ(theta: float) -> GateSpec:
    return GateSpec("RZ", (theta,))


def U(theta: float, phi: float, lam: float) -> GateSpec:
    return GateSpec("U", (theta, phi, lam))


_ALIASES = {"CX": "CNOT"}


def gate_from_name(name: str, params: Sequence[float] = ()) -> GateSpec:
    key = name.upper()
    if key.startswith("INSTR_"):
        key = key[len("INSTR_"):]
    key = _ALIASES.get(key, key)
    return GateSpec(key, tuple(params))


def _as_gate(g) -> GateSpec:
    return g if isinstance(g, GateSpec) else gate_from_name(str(g))


class Scheme(str, Enum):
    CAT = "cat"
    TP1 = "1tp"
    TP2 = "2tp"
    TP_SAFE = "tp_safe"


SCHEME_NAMES = tuple(s.value for s in Scheme)
NODE_NAME = re.compile(r"^node_(\d+)$")

Operand = tuple[int, str]  # (memory position, node name)


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class MonolithicGate:
    gate: GateSpec
    qubits: tuple[int, ...]
    cbit: Optional[int] = None

    def __post_init__(self):
        if len(set(self.qubits)) != len(self.qubits) or any(q < 0 for q in self.qubits):
            raise CircuitError(f"qubit indices must be distinct and >= 0: {self.qubits}")


@dataclass
class Circuit:
    """A monolithic circuit over ``num_qubits`` global qubits."""

    gates: list[MonolithicGate] = field(default_factory=list)
    num_qubits: int = 0
    num_clbits: int = 0
    annotations: list[str] = field(default_factory=list)

    @classmethod
    def from_tuples(cls, tuples: Iterable[tuple]) -> "Circuit":
        gates = []
        for t in tuples:
            gate = _as_gate(t[0])
            cbit = None
            qubits = tuple(int(q) for q in t[1:])
            if gate.name == "MEASURE" and len(qubits) == 2:
                qubits, cbit = qubits[:1], qubits[1]
            gates.append(MonolithicGate(gate, qubits, cbit))
        n = max((max(g.qubits) + 1 for g in gates if g.qubits), default=0)
        nc = max((g.cbit + 1 for g in gates if g.cbit is not None), default=0)
        return cls(gates, n, nc)

    def to_tuples(self) -> list[tuple]:
        out = []
        for g in self.gates:
            t = (g.gate, *g.qubits)
            out.append(t + (g.cbit,) if g.cbit is not None else t)
        return out


@dataclass(frozen=True)
class DistributedGate:
    gate: GateSpec
    operands: tuple[Operand, ...]
    scheme: Optional[Scheme] = None
    cbit: Optional[int] = None

    @property
    def nodes(self) -> list[str]:
        out: list[str] = []
        for _, n in self.operands:
            if n not in out:
                out.append(n)
        return out

    @property
    def is_remote(self) -> bool:
        return len(self.nodes) > 1

    @classmethod
    def from_tuple(cls, t: Sequence) -> "DistributedGate":
        gate = _as_gate(t[0])
        rest = list(t[1:])
        scheme = None
        if rest and isinstance(rest[-1], (str, Scheme)) and str(
            getattr(rest[-1], "value", rest[-1])
        ) in SCHEME_NAMES:
            scheme = Scheme(rest.pop())
        if len(rest) % 2:
            raise CircuitError(f"malformed gate tuple {tuple(t)!r}")
        operands: list[Operand] = []
        for pos, node in zip(rest[::2], rest[1::2]):
            node = getattr(node, "name", node)
            if isinstance(pos, (list, tuple, range)):
                operands.extend((int(p), node) for p in pos)
            else:
                operands.append((int(pos), node))
        return cls(gate, tuple(operands), scheme)

    def to_tuple(self) -> tuple:
        flat: list = [self.gate]
        for pos, node in self.operands:
            flat += [pos, node]
        if self.scheme is not None:
            flat.append(self.scheme.value)
        return tuple(flat)


def distributed(tuples: Iterable[Sequence]) -> list[DistributedGate]:
    """Convert gate tuples (or pass through DistributedGates)."""
    return [t if isinstance(t, DistributedGate) else DistributedGate.from_tuple(t) for t in tuples]


class LogicalQubitMap:
    """Where each logical qubit currently lives: logical id -> (node, position)."""

    def __init__(self, mapping: Optional[dict] = None):
        self._loc: dict = {}
        self._at: dict[tuple[str, int], object] = {}
        for logical, loc in (mapping or {}).items():
            self.place(logical, *loc)

    def place(self, logical, node: str, pos: int) -> None:
        key = (node, pos)
        other = self._at.get(key)
        if other is not None and other != logical:
            raise CircuitError(f"{node}[{pos}] already holds logical qubit {other!r}")
        old = self._loc.get(logical)
        if old is not None:
            del self._at[old]
        self._loc[logical] = key
        self._at[key] = logical

    move = place

    def location(self, logical) -> tuple[str, int]:
        return self._loc[logical]

    def logical_at(self, node: str, pos: int):
        return self._at.get((node, pos))

    def occupied(self, node: str) -> set[int]:
        return {p for (n, p) in self._at if n == node}

    def items(self):
        return self._loc.items()

    def copy(self) -> "LogicalQubitMap":
        return LogicalQubitMap(dict(self._loc))

    def __contains__(self, logical) -> bool:
        return logical in self._loc

    def __len__(self) -> int:
        return len(self._loc)

    def __eq__(self, other) -> bool:
        return isinstance(other, LogicalQubitMap) and self._loc == other._loc

    def __repr__(self) -> str:
        return f"LogicalQubitMap({self._loc!r})"

    @classmethod
    def from_circuit(cls, gates: Iterable[DistributedGate]) -> "LogicalQubitMap":
        """Identity map over every (node, position) the circuit touches."""
        m = cls()
        for g in gates:
            for pos, node in g.operands:
                if (node, pos) not in m:
                    m.place((node, pos), node, pos)
        return m


# ---------------------------------------------------------------------------
# partitioning

PartitionerStrategy = Callable[..., tuple[list[DistributedGate], LogicalQubitMap]]


def partition_contiguous(
    circuit: Circuit,
    capacities: Sequence[int],
    default_scheme: Scheme | str = Scheme.CAT,
    position_offset: int | Sequence[int] = 0,
) -> tuple[list[DistributedGate], LogicalQubitMap]:
    """Assign qubits to nodes in contiguous index blocks.

    The first ``capacities[0]`` qubits go to ``node_0`` at positions
    ``position_offset, position_offset + 1, ...`` and so on. Every used
    position is INITialised at the start. The logical id of qubit ``i`` in
    the returned map is the integer ``i``.
    """
    scheme = Scheme(default_scheme)
    n = circuit.num_qubits
    if sum(capacities) < n:
        raise CircuitError(
            f"circuit needs {n} qubits but the nodes only hold {sum(capacities)}"
        )
    offsets = (
        [position_offset] * len(capacities)
        if isinstance(position_offset, int)
        else list(position_offset)
    )
    qmap = LogicalQubitMap()
    loc: dict[int, Operand] = {}
    q = 0
    for k, cap in enumerate(capacities):
        for j in range(cap):
            if q == n:
                break
            loc[q] = (offsets[k] + j, f"node_{k}")
            qmap.place(q, f"node_{k}", offsets[k] + j)
            q += 1
    out: list[DistributedGate] = []
    for k in range(len(capacities)):
        node = f"node_{k}"
        positions = [loc[i] for i in range(n) if loc[i][1] == node]
        if positions:
            out.append(DistributedGate(INIT, tuple(positions)))
    for g in circuit.gates:
        ops = tuple(loc[i] for i in g.qubits)
        nodes = {nd for _, nd in ops}
        if len(nodes) > 1 and len(ops) > 2:
            raise CircuitError(f"{g.gate} on {len(ops)} qubits spans nodes; decompose it first")
        out.append(DistributedGate(g.gate, ops, scheme if len(nodes) > 1 else None, g.cbit))
    return out, qmap


def partition_for_network(
    circuit: Circuit,
    network,
    strategy: PartitionerStrategy = partition_contiguous,
    default_scheme: Scheme | str = Scheme.CAT,
) -> tuple[list[DistributedGate], LogicalQubitMap]:
    caps = [len(q.processing_qubit_positions) for q in network.qpus]
    offsets = [q.config.num_comm_qubits for q in network.qpus]
    return strategy(circuit, caps, default_scheme, position_offset=offsets)


def validate_distributed(gates: Sequence[DistributedGate], network) -> list[str]:
    """Static checks of a distributed circuit against ``network``.

    Returns a list of human-readable diagnostics; empty means valid.
    """
    diags: list[str] = []
    names = {q.name: q for q in network.qpus}
    for i, g in enumerate(gates):
        where = f"gate {i} ({g.gate})"
        ok = True
        for pos, node in g.operands:
            if not NODE_NAME.match(node) or node not in names:
                diags.append(f"{where}: unknown node {node!r}")
                ok = False
                continue
            qpu = names[node]
            if not 0 <= pos < qpu.config.num_positions:
                diags.append(f"{where}: {node} has no position {pos}")
                ok = False
            elif qpu.is_comm(pos):
                diags.append(f"{where}: {node} position {pos} is a comm position")
        if len(set(g.operands)) != len(g.operands):
            diags.append(f"{where}: repeated operand")
        if g.gate.arity is not None and g.gate.arity != len(g.operands):
            diags.append(f"{where}: expects {g.gate.arity} operand(s), got {len(g.operands)}")
        if g.gate.name == "INIT" and g.is_remote:
            diags.append(f"{where}: INIT must target a single node")
            continue
        if g.is_remote and g.scheme is None:
            diags.append(f"{where}: spans nodes {g.nodes} but has no remote scheme")
        if not g.is_remote and g.scheme is not None:
            diags.append(f"{where}: local gate carries scheme {g.scheme.value!r}")
        if g.is_remote and ok:
            if len(g.operands) > 2:
                diags.append(f"{where}: remote gates on more than two qubits are unsupported")
            elif not network.has_quantum_link(*g.nodes):
                diags.append(
                    f"{where}: no quantum link between {g.nodes[0]} and {g.nodes[1]}"
                )
            if g.scheme is Scheme.CAT and g.gate.controlled_base is None:
                diags.append(f"{where}: cat-comm needs a controlled gate, got {g.gate}")
    return diags


# ---------------------------------------------------------------------------
# text format

_LINE = re.compile(
    r"^(?P<gate>[A-Za-z_][A-Za-z0-9_]*)(?:\((?P<params>[^)]*)\))?"
    r"(?P<ops>(?:\s+\d+@[A-Za-z0-9_]+)+)"
    r"(?:\s+(?P<scheme>cat|1tp|2tp|tp_safe))?"
    r"(?:\s*->\s*c(?P<cbit>\d+))?\s*$"
)


def parse_circuit_text(text: str) -> list[DistributedGate]:
    """Parse the line-oriented distributed circuit format.

    One gate per line; ``#`` starts a comment::

        INIT 2@node_0 3@node_0
        H 2@node_0
        CNOT 2@node_0 2@node_1 cat
        RZ(1.5707963267948966) 2@node_1
        MEASURE 2@node_0 -> c0
    """
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None:
            raise CircuitError(f"line {lineno}: cannot parse {raw.strip()!r}")
        params = ()
        if m["params"] is not None and m["params"].strip():
            try:
                params = tuple(float(p) for p in m["params"].split(","))
            except ValueError:
                raise CircuitError(f"line {lineno}: bad parameters {m['params']!r}") from None
        try:
            gate = gate_from_name(m["gate"], params)
        except ValueError as e:
            raise CircuitError(f"line {lineno}: {e}") from None
        ops = []
        for tok in m["ops"].split():
            pos, node = tok.split("@")
            ops.append((int(pos), node))
        scheme = Scheme(m["scheme"]) if m["scheme"] else None
        cbit = int(m["cbit"]) if m["cbit"] is not None else None
        out.append(DistributedGate(gate, tuple(ops), scheme, cbit))
    return out


def format_circuit_text(gates: Iterable[DistributedGate]) -> str:
    lines = []
    for g in gates:
        parts = [str(g.gate)] + [f"{p}@{n}" for p, n in g.operands]
        if g.scheme is not None:
            parts.append(g.scheme.value)
        line = " ".join(parts)
        if g.cbit is not None:
            line += f" -> c{g.cbit}"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")
