"""Lower a distributed circuit to one instruction stream per QPU.

Remote gates are expanded into entanglement requests, local primitives,
measurements, classical messages and classically controlled corrections.
Comm qubits and free processing positions are allocated statically while
walking the circuit in order, so every stream is the per-QPU projection of
one global sequential order and cannot deadlock.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

from .circuit import (
    CNOT,
    DistributedGate,
    H,
    LogicalQubitMap,
    Scheme,
    X,
    Z,
    gate_from_name,
    validate_distributed,
)
from .qstate import GateSpec

OPS = (
    "INIT",
    "APPLY",
    "ENTANGLE",
    "MEASURE",
    "SEND",
    "RECV",
    "COND_APPLY",
    "FREE",
    "SWAP_INTERNAL",
)


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    """One step of a per-QPU program.

    Field use by ``op``:

    ============== =====================================================
    INIT           positions
    APPLY          gate, positions
    ENTANGLE       peer, tag (pairing token), positions = (comm pos,)
    MEASURE        positions = (pos,), basis, vars = (dest,)
    SEND           peer, tag, vars (sent in order)
    RECV           peer, tag, vars (written in order)
    COND_APPLY     gate, positions = (pos,), vars (apply if XOR is 1)
    FREE           positions = (pos,)
    SWAP_INTERNAL  positions = (src, dst)
    ============== =====================================================
    """

    op: str
    positions: tuple[int, ...] = ()
    gate: Optional[GateSpec] = None
    peer: Optional[str] = None
    tag: Optional[str] = None
    vars: tuple[str, ...] = ()
    basis: str = "Z"

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown instruction {self.op!r}")

    def __str__(self) -> str:
        p = " ".join(str(x) for x in self.positions)
        v = " ".join(self.vars)
        if self.op == "INIT":
            return f"INIT {p}"
        if self.op == "APPLY":
            return f"APPLY {self.gate} {p}"
        if self.op == "ENTANGLE":
            return f"ENTANGLE {self.peer} {self.tag} {p}"
        if self.op == "MEASURE":
            return f"MEASURE {p} {self.basis} -> {v}"
        if self.op == "SEND":
            return f"SEND {self.peer} {self.tag} {v}"
        if self.op == "RECV":
            return f"RECV {self.peer} {self.tag} -> {v}"
        if self.op == "COND_APPLY":
            return f"COND_APPLY {self.gate} {p} if {v}"
        if self.op == "FREE":
            return f"FREE {p}"
        return f"SWAP_INTERNAL {p}"


@dataclass
class CompiledProgram:
    streams: dict[str, list[Instruction]]
    qmap_initial: LogicalQubitMap
    qmap_final: LogicalQubitMap

    @property
    def ebits(self) -> int:
        n = sum(1 for s in self.streams.values() for i in s if i.op == "ENTANGLE")
        return n // 2

    @property
    def classical_bits(self) -> int:
        return sum(len(i.vars) for s in self.streams.values() for i in s if i.op == "SEND")

    def depth(self, node: str) -> int:
        """Number of quantum operations in the node's stream."""
        quantum = {"INIT", "APPLY", "ENTANGLE", "MEASURE", "COND_APPLY", "SWAP_INTERNAL"}
        return sum(1 for i in self.streams[node] if i.op in quantum)

    def report(self) -> dict:
        return {
            "ebits": self.ebits,
            "classical_bits": self.classical_bits,
            "depth": {n: self.depth(n) for n in self.streams},
        }

    def to_text(self) -> str:
        return format_streams(self.streams)


class _Builder:
    def __init__(self, network, qmap: LogicalQubitMap):
        self.network = network
        self.qmap = qmap
        self.streams: dict[str, list[Instruction]] = {q.name: [] for q in network.qpus}
        self.comm_free = {q.name: set(q.comm_positions) for q in network.qpus}
        self.nvars: dict[str, int] = defaultdict(int)
        self.written: dict[str, set[str]] = defaultdict(set)
        self.nremote = 0
        self.nebits = 0

    def emit(self, node: str, op: str, **kw) -> None:
        self.streams[node].append(Instruction(op, **kw))

    def var(self, node: str) -> str:
        v = f"m{self.nvars[node]}"
        self.nvars[node] += 1
        return v

    def named_var(self, node: str, name: str) -> str:
        if name in self.written[node]:
            raise CompileError(f"classical variable {name} on {node} is written twice")
        self.written[node].add(name)
        return name

    def alloc_comm(self, node: str) -> int:
        free = self.comm_free[node]
        if not free:
            raise CompileError(
                f"no free comm qubit on {node}: the circuit needs more than "
                f"{self.network.get_node(node).config.num_comm_qubits} at once"
            )
        pos = min(free)
        free.discard(pos)
        return pos

    def release_comm(self, node: str, pos: int) -> None:
        self.emit(node, "FREE", positions=(pos,))
        self.comm_free[node].add(pos)

    def alloc_processing(self, node: str, prefer: Optional[int] = None) -> int:
        used = self.qmap.occupied(node)
        qpu = self.network.get_node(node)
        if prefer is not None and prefer not in used and not qpu.is_comm(prefer):
            return prefer
        for p in qpu.processing_qubit_positions:
            if p not in used:
                return p
        raise CompileError(f"no free processing position on {node} for a teleported qubit")

    def entangle(self, a: str, b: str) -> tuple[int, int]:
        if not self.network.has_quantum_link(a, b):
            raise CompileError(f"no quantum link between {a} and {b}")
        token = f"e{self.nebits}"
        self.nebits += 1
        pa, pb = self.alloc_comm(a), self.alloc_comm(b)
        self.emit(a, "ENTANGLE", peer=b, tag=token, positions=(pa,))
        self.emit(b, "ENTANGLE", peer=a, tag=token, positions=(pb,))
        return pa, pb


def expand_cat(b: _Builder, gate: GateSpec, control: tuple[int, str], target: tuple[int, str]) -> None:
    """Cat-comm (telegate): distribute the control, act on the target, uncompute."""
    base = gate.controlled_base
    if base is None:
        raise CompileError(f"cat-comm needs a controlled gate, got {gate}")
    (pc, A), (pt, B) = control, target
    g = f"g{b.nremote}"
    ca, cb = b.entangle(A, B)
    m1a, m1b, m2b, m2a = b.var(A), b.var(B), b.var(B), b.var(A)
    b.emit(A, "APPLY", gate=CNOT, positions=(pc, ca))
    b.emit(A, "MEASURE", positions=(ca,), vars=(m1a,))
    b.release_comm(A, ca)
    b.emit(A, "SEND", peer=B, tag=f"{g}.m1", vars=(m1a,))
    b.emit(B, "RECV", peer=A, tag=f"{g}.m1", vars=(m1b,))
    b.emit(B, "COND_APPLY", gate=X, positions=(cb,), vars=(m1b,))
    b.emit(B, "APPLY", gate=gate, positions=(cb, pt))
    # X-basis disentangling measurement as H then Z
    b.emit(B, "APPLY", gate=H, positions=(cb,))
    b.emit(B, "MEASURE", positions=(cb,), vars=(m2b,))
    b.release_comm(B, cb)
    b.emit(B, "SEND", peer=A, tag=f"{g}.m2", vars=(m2b,))
    b.emit(A, "RECV", peer=B, tag=f"{g}.m2", vars=(m2a,))
    b.emit(A, "COND_APPLY", gate=Z, positions=(pc,), vars=(m2a,))


def expand_teleport(
    b: _Builder,
    logical,
    dest: str,
    safe: bool = False,
    prefer: Optional[int] = None,
) -> int:
    """Teleport ``logical`` to a free processing position on ``dest``.

    With ``safe`` the arriving half is moved out of the comm qubit before
    waiting for the classical bits, and the corrections act on the
    processing position. Returns the new position.
    """
    A, pq = b.qmap.location(logical)
    B = dest
    p = b.alloc_processing(B, prefer)
    g = f"g{b.nremote}.tp{b.nebits}"
    ca, cb = b.entangle(A, B)
    m1, m2 = b.var(A), b.var(A)
    r1, r2 = b.var(B), b.var(B)
    b.emit(A, "APPLY", gate=CNOT, positions=(pq, ca))
    b.emit(A, "APPLY", gate=H, positions=(pq,))
    b.emit(A, "MEASURE", positions=(ca,), vars=(m1,))
    b.emit(A, "MEASURE", positions=(pq,), vars=(m2,))
    b.release_comm(A, ca)
    b.emit(A, "FREE", positions=(pq,))
    b.emit(A, "SEND", peer=B, tag=g, vars=(m1, m2))
    if safe:
        b.emit(B, "SWAP_INTERNAL", positions=(cb, p))
        b.release_comm(B, cb)
        b.emit(B, "RECV", peer=A, tag=g, vars=(r1, r2))
        b.emit(B, "COND_APPLY", gate=X, positions=(p,), vars=(r1,))
        b.emit(B, "COND_APPLY", gate=Z, positions=(p,), vars=(r2,))
    else:
        b.emit(B, "RECV", peer=A, tag=g, vars=(r1, r2))
        b.emit(B, "COND_APPLY", gate=X, positions=(cb,), vars=(r1,))
        b.emit(B, "COND_APPLY", gate=Z, positions=(cb,), vars=(r2,))
        b.emit(B, "SWAP_INTERNAL", positions=(cb, p))
        b.release_comm(B, cb)
    b.qmap.move(logical, B, p)
    return p


def expand_tp(b: _Builder, gate: GateSpec, c_logical, t_logical, scheme: Scheme) -> None:
    """1TP / 2TP / TP-safe: teleport the first operand to the second's node."""
    A, home = b.qmap.location(c_logical)
    B, pt = b.qmap.location(t_logical)
    safe = scheme is Scheme.TP_SAFE
    p = expand_teleport(b, c_logical, B, safe=safe)
    b.emit(B, "APPLY", gate=gate, positions=(p, pt))
    if scheme in (Scheme.TP2, Scheme.TP_SAFE):
        expand_teleport(b, c_logical, A, safe=safe, prefer=home)


def compile_circuit(
    gates: Sequence[DistributedGate],
    network,
    qmap: Optional[LogicalQubitMap] = None,
    validate: bool = True,
) -> CompiledProgram:
    """Compile ``gates`` for ``network``.

    ``qmap`` maps logical ids to starting locations; by default each
    ``(node, position)`` the circuit touches is its own logical qubit and
    gate operands are read as logical ids. When an explicit map is given
    (e.g. from a partitioner) operands name starting locations and are
    translated through it as teleportations relocate qubits.
    """
    if validate:
        diags = validate_distributed(gates, network)
        if diags:
            raise CompileError("invalid distributed circuit:\n  " + "\n  ".join(diags))
    start = qmap.copy() if qmap is not None else LogicalQubitMap.from_circuit(gates)
    # starting location -> logical id
    by_origin = {loc: logical for logical, loc in start.items()}
    b = _Builder(network, start.copy())

    def logical_of(op):
        pos, node = op
        try:
            return by_origin[(node, pos)]
        except KeyError:
            raise CompileError(f"{node}[{pos}] is not a known qubit location") from None

    for g in gates:
        logicals = [logical_of(op) for op in g.operands]
        locs = [b.qmap.location(lq) for lq in logicals]
        nodes = {n for n, _ in locs}
        if g.gate.name == "INIT":
            (node,) = nodes
            b.emit(node, "INIT", positions=tuple(p for _, p in locs))
        elif g.gate.name == "MEASURE":
            ((node, pos),) = locs
            v = b.named_var(node, f"c{g.cbit}") if g.cbit is not None else b.var(node)
            b.emit(node, "MEASURE", positions=(pos,), vars=(v,))
        elif len(nodes) == 1:
            (node,) = nodes
            b.emit(node, "APPLY", gate=g.gate, positions=tuple(p for _, p in locs))
        else:
            if g.scheme is None:
                raise CompileError(
                    f"{g.gate} on {g.operands} spans nodes {sorted(nodes)} after "
                    f"relocation but has no remote scheme"
                )
            if len(locs) != 2:
                raise CompileError(f"remote {g.gate} on {len(locs)} qubits is unsupported")
            (A, pa), (B, pb) = locs
            if g.scheme is Scheme.CAT:
                expand_cat(b, g.gate, (pa, A), (pb, B))
            else:
                expand_tp(b, g.gate, logicals[0], logicals[1], g.scheme)
            b.nremote += 1
    return CompiledProgram(b.streams, start, b.qmap)


# ---------------------------------------------------------------------------
# assembly text


def format_streams(streams: dict[str, list[Instruction]]) -> str:
    out = []
    for node, stream in streams.items():
        out.append(f"[{node}]")
        out.extend(f"  {ins}" for ins in stream)
    return "\n".join(out) + "\n"


def _gate(text: str) -> GateSpec:
    m = re.fullmatch(r"([A-Z_]+)(?:\(([^)]*)\))?", text)
    params = tuple(float(x) for x in m[2].split(",")) if m[2] else ()
    return gate_from_name(m[1], params)


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split())


def parse_instruction(line: str) -> Instruction:
    """Inverse of ``str(Instruction)``."""
    op, _, rest = line.strip().partition(" ")
    rest = rest.strip()
    if op == "INIT":
        return Instruction("INIT", positions=_ints(rest))
    if op == "APPLY":
        g, _, p = rest.partition(" ")
        return Instruction("APPLY", gate=_gate(g), positions=_ints(p))
    if op == "ENTANGLE":
        peer, tag, p = rest.split()
        return Instruction("ENTANGLE", peer=peer, tag=tag, positions=(int(p),))
    if op == "MEASURE":
        lhs, _, v = rest.partition("->")
        pos, basis = lhs.split()
        return Instruction("MEASURE", positions=(int(pos),), basis=basis, vars=tuple(v.split()))
    if op == "SEND":
        peer, tag, *vs = rest.split()
        return Instruction("SEND", peer=peer, tag=tag, vars=tuple(vs))
    if op == "RECV":
        lhs, _, v = rest.partition("->")
        peer, tag = lhs.split()
        return Instruction("RECV", peer=peer, tag=tag, vars=tuple(v.split()))
    if op == "COND_APPLY":
        lhs, _, v = rest.partition(" if ")
        g, p = lhs.split()
        return Instruction("COND_APPLY", gate=_gate(g), positions=(int(p),), vars=tuple(v.split()))
    if op == "FREE":
        return Instruction("FREE", positions=_ints(rest))
    if op == "SWAP_INTERNAL":
        return Instruction("SWAP_INTERNAL", positions=_ints(rest))
    raise ValueError(f"cannot parse instruction {line!r}")


def parse_streams(text: str) -> dict[str, list[Instruction]]:
    streams: dict[str, list[Instruction]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            streams[current] = []
        elif current is None:
            raise ValueError("instruction before any [node] header")
        else:
            streams[current].append(parse_instruction(line))
    return streams
