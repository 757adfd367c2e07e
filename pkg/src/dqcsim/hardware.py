"""Emulated DQC hardware.

The static description (:class:`QpuConfig`, :class:`ConnectionConfig`,
:class:`DqcNetwork`) is plain data built by :func:`build_dqc`. A
:class:`Machine` binds a network to one kernel and one state registry and
provides the timed, noisy primitives that workers drive.
"""

from __future__ import annotations

import dataclasses
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Generator, Iterable, Optional, Sequence

import numpy as np

from .kernel import Kernel, Signal
from .qstate import GateSpec, Qubit, StateRegistry, werner_state


class TopologyError(ValueError):
    pass


class HardwareError(RuntimeError):
    pass


@dataclass
class QpuConfig:
    """Per-QPU parameters. Times in ns, rates in Hz."""

    num_positions: int = 10
    num_comm_qubits: int = 2
    single_qubit_gate_time: float = 135e3
    two_qubit_gate_time: float = 600e3
    measurement_time: float = 6e6
    single_qubit_gate_error_prob: float = 0.0
    p_depolar_error_cnot: float = 0.0
    meas_error_prob: float = 0.0
    comm_qubit_depolar_rate: float = 0.0
    proc_qubit_depolar_rate: float = 0.0
    init_time: float = 0.0

    def __post_init__(self):
        if not 0 <= self.num_comm_qubits <= self.num_positions:
            raise ValueError("need 0 <= num_comm_qubits <= num_positions")
        for name in ("single_qubit_gate_error_prob", "p_depolar_error_cnot", "meas_error_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in (
            "single_qubit_gate_time",
            "two_qubit_gate_time",
            "measurement_time",
            "comm_qubit_depolar_rate",
            "proc_qubit_depolar_rate",
            "init_time",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class ConnectionConfig:
    """Black-box entangling link: delivers ``state4distribution`` after ``delay`` ns."""

    delay: float = 0.0
    state4distribution: np.ndarray = field(default_factory=lambda: werner_state(1.0))

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be non-negative")
        rho = np.asarray(self.state4distribution, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError("state4distribution must be a 4x4 density matrix")
        if not np.allclose(rho, rho.conj().T, atol=1e-9) or abs(np.trace(rho) - 1) > 1e-9:
            raise ValueError("state4distribution is not a valid density matrix")
        if np.linalg.eigvalsh(rho).min() < -1e-9:
            raise ValueError("state4distribution is not positive semidefinite")
        self.state4distribution = rho

    @classmethod
    def werner(cls, fidelity: float, delay: float = 0.0) -> "ConnectionConfig":
        return cls(delay=delay, state4distribution=werner_state(fidelity))

    @classmethod
    def from_rate(cls, ent_dist_rate_hz: float, fidelity: float = 1.0) -> "ConnectionConfig":
        return cls.werner(fidelity, delay=1e9 / ent_dist_rate_hz)


@dataclass
class NoiseConventions:
    """Modelling choices that the hardware parameters alone leave open.

    two_qubit_depolarizing
        ``"joint"``: one two-qubit depolarizing channel with probability
        ``p_depolar_error_cnot``; ``"per_qubit"``: independent single-qubit
        channels with that probability on each operand.
    readout_error
        ``"flip"``: the reported bit is flipped with ``meas_error_prob``;
        ``"depolarize"``: single-qubit depolarizing with ``meas_error_prob``
        just before an ideal measurement.
    memory_noise_during_gates
        Whether operands keep accruing memory noise while a timed
        instruction runs on them.
    gate_applied_at
        ``"start"`` or ``"end"`` of the instruction slot. Only matters when
        memory noise accrues during gates.
    correction_time
        ``"zero"``: classically controlled corrections take no time;
        ``"gate"``: they take ``single_qubit_gate_time``.
    noisy_corrections
        Apply single-qubit gate error to executed corrections.
    """

    two_qubit_depolarizing: str = "joint"
    readout_error: str = "flip"
    memory_noise_during_gates: bool = False
    gate_applied_at: str = "start"
    correction_time: str = "zero"
    noisy_corrections: bool = True

    def __post_init__(self):
        choices = {
            "two_qubit_depolarizing": ("joint", "per_qubit"),
            "readout_error": ("flip", "depolarize"),
            "gate_applied_at": ("start", "end"),
            "correction_time": ("zero", "gate"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")


@dataclass
class QpuNode:
    name: str
    index: int
    config: QpuConfig

    @property
    def comm_positions(self) -> list[int]:
        return list(range(self.config.num_comm_qubits))

    @property
    def processing_qubit_positions(self) -> list[int]:
        return list(range(self.config.num_comm_qubits, self.config.num_positions))

    def is_comm(self, pos: int) -> bool:
        return 0 <= pos < self.config.num_comm_qubits

    def check_position(self, pos: int) -> None:
        if not 0 <= pos < self.config.num_positions:
            raise HardwareError(f"{self.name} has no memory position {pos}")


def _pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass
class DqcNetwork:
    qpus: list[QpuNode]
    quantum_links: dict[tuple[int, int], ConnectionConfig]
    classical_links: dict[tuple[int, int], float]
    conventions: NoiseConventions = field(default_factory=NoiseConventions)

    @property
    def nodes(self) -> dict[str, QpuNode]:
        return {q.name: q for q in self.qpus}

    def get_node(self, name: str) -> QpuNode:
        for q in self.qpus:
            if q.name == name:
                return q
        raise TopologyError(f"no node named {name!r}")

    def _index(self, node: str | int) -> int:
        return node if isinstance(node, int) else self.get_node(node).index

    def has_quantum_link(self, a: str | int, b: str | int) -> bool:
        return _pair(self._index(a), self._index(b)) in self.quantum_links

    def quantum_link(self, a: str | int, b: str | int) -> ConnectionConfig:
        try:
            return self.quantum_links[_pair(self._index(a), self._index(b))]
        except KeyError:
            raise TopologyError(f"no quantum link between {a} and {b}") from None

    def classical_delay(self, a: str | int, b: str | int) -> float:
        try:
            return self.classical_links[_pair(self._index(a), self._index(b))]
        except KeyError:
            raise TopologyError(f"no classical link between {a} and {b}") from None


_QPU_FIELDS = {f.name for f in dataclasses.fields(QpuConfig)}
_CONN_FIELDS = {"delay", "state4distribution"}


def _check_links(pairs: Iterable[Sequence[int]], n: int, kind: str) -> list[tuple[int, int]]:
    out: list[tuple[int, int]] = []
    for raw in pairs:
        a, b = raw
        if not (0 <= a < n and 0 <= b < n):
            raise TopologyError(f"{kind} link {tuple(raw)} is out of range for {n} QPUs")
        if a == b:
            raise TopologyError(f"{kind} link {tuple(raw)} is a self-loop")
        p = _pair(a, b)
        if p in out:
            raise TopologyError(f"duplicate {kind} link {tuple(raw)}")
        out.append(p)
    return out


def build_dqc(
    num_qpus: int,
    quantum_topology: Iterable[Sequence[int]] = (),
    classical_topology: Iterable[Sequence[int]] = (),
    qpu_config: Optional[QpuConfig] = None,
    conn_config: Optional[ConnectionConfig] = None,
    classical_delay: float = 0.0,
    conventions: Optional[NoiseConventions] = None,
    **kwargs: Any,
) -> DqcNetwork:
    """Build a network of ``num_qpus`` identical QPUs named ``node_0`` ...

    QPU and connection parameters can be passed either as config objects or
    as flat keyword arguments using the config field names.
    """
    if num_qpus < 1:
        raise TopologyError("need at least one QPU")
    unknown = set(kwargs) - _QPU_FIELDS - _CONN_FIELDS
    if unknown:
        raise TypeError(f"unknown hardware parameters: {sorted(unknown)}")
    qpu_kw = {k: v for k, v in kwargs.items() if k in _QPU_FIELDS}
    conn_kw = {k: v for k, v in kwargs.items() if k in _CONN_FIELDS}
    if qpu_config is None:
        qpu_config = QpuConfig(**qpu_kw)
    elif qpu_kw:
        qpu_config = dataclasses.replace(qpu_config, **qpu_kw)
    if conn_config is None:
        conn_config = ConnectionConfig(**conn_kw)
    elif conn_kw:
        conn_config = dataclasses.replace(conn_config, **conn_kw)
    if classical_delay < 0:
        raise ValueError("classical_delay must be non-negative")
    qlinks = _check_links(quantum_topology, num_qpus, "quantum")
    clinks = _check_links(classical_topology, num_qpus, "classical")
    return DqcNetwork(
        qpus=[QpuNode(f"node_{i}", i, qpu_config) for i in range(num_qpus)],
        quantum_links={p: conn_config for p in qlinks},
        classical_links={p: classical_delay for p in clinks},
        conventions=conventions or NoiseConventions(),
    )


# ---------------------------------------------------------------------------
# runtime


@dataclass
class _QpuState:
    node: QpuNode
    memory: list[Optional[Qubit]]
    comm_free: set[int]
    busy: list[tuple[float, float, str]] = field(default_factory=list)
    free_waiters: list[Signal] = field(default_factory=list)


@dataclass
class _Rendezvous:
    token: str
    signal: Signal
    first: tuple[str, Optional[int]]
    second: Optional[tuple[str, Optional[int]]] = None
    time: float = 0.0
    positions: dict[str, int] = field(default_factory=dict)


class Machine:
    """Timed, noisy hardware primitives for one simulation instance.

    Methods that take simulated time are generators to be driven with
    ``yield from`` inside a kernel task.
    """

    def __init__(self, network: DqcNetwork, kernel: Kernel, registry: StateRegistry):
        self.network = network
        self.kernel = kernel
        self.reg = registry
        self.conv = network.conventions
        self.qpus = {
            n.name: _QpuState(n, [None] * n.config.num_positions, set(n.comm_positions))
            for n in network.qpus
        }
        self._rendezvous: dict[str, _Rendezvous] = {}
        self._mail: dict[tuple[str, str, str], deque] = defaultdict(deque)
        self._mail_waiters: dict[tuple[str, str, str], Signal] = {}
        self.deliveries: list[tuple[str, float, float]] = []  # token, rendezvous, delivery

    # -- memory helpers ----------------------------------------------------

    def qubit_at(self, node: str, pos: int) -> Qubit:
        st = self.qpus[node]
        st.node.check_position(pos)
        q = st.memory[pos]
        if q is None or not q.alive:
            raise HardwareError(f"{node} position {pos} holds no qubit")
        return q

    def _rate(self, node: QpuNode, pos: int) -> float:
        c = node.config
        return c.comm_qubit_depolar_rate if node.is_comm(pos) else c.proc_qubit_depolar_rate

    def busy_comm(self, node: str) -> set[int]:
        st = self.qpus[node]
        return set(st.node.comm_positions) - st.comm_free

    # -- timed local operations ---------------------------------------------

    def _occupy(self, node: str, duration: float, label: str, qubits: Sequence[Qubit], action):
        """Run ``action`` inside a timed slot of ``duration`` ns on ``node``."""
        st = self.qpus[node]
        start = self.kernel.now()
        early = not (self.conv.memory_noise_during_gates and self.conv.gate_applied_at == "end")
        result = action() if early else None
        if duration > 0:
            st.busy.append((start, start + duration, label))
            yield self.kernel.timeout(duration, f"{node} {label}")
        if not early:
            result = action()
        if not self.conv.memory_noise_during_gates:
            now = self.kernel.now()
            for q in qubits:
                if q.alive:
                    q.last_touched = now
        return result

    def _gate_noise(self, node: QpuNode, gate: GateSpec, qubits: Sequence[Qubit]) -> None:
        c = node.config
        if len(qubits) == 1:
            self.reg.apply_depolarizing(qubits, c.single_qubit_gate_error_prob)
        elif self.conv.two_qubit_depolarizing == "joint":
            self.reg.apply_depolarizing(qubits, c.p_depolar_error_cnot)
        else:
            for q in qubits:
                self.reg.apply_depolarizing([q], c.p_depolar_error_cnot)

    def init(self, node: str, positions: Sequence[int]) -> Generator:
        st = self.qpus[node]
        for p in positions:
            st.node.check_position(p)
            if st.node.is_comm(p):
                raise HardwareError(f"{node}: INIT on comm position {p}")

        def action():
            out = []
            for p in positions:
                old = st.memory[p]
                if old is not None and old.alive:
                    self.reg.discard(old)
                (q,) = self.reg.init_qubits(1, self._rate(st.node, p), [f"{node}[{p}]"])
                st.memory[p] = q
                out.append(q)
            return out

        qs = yield from self._occupy(node, st.node.config.init_time, "INIT", [], action)
        if not self.conv.memory_noise_during_gates:
            for q in qs:
                q.last_touched = self.kernel.now()
        return qs

    def execute_local(self, node: str, gate: GateSpec, positions: Sequence[int]) -> Generator:
        """Apply ``gate`` with its duration and gate error."""
        if gate.name == "INIT":
            return (yield from self.init(node, positions))
        st = self.qpus[node]
        qubits = [self.qubit_at(node, p) for p in positions]
        c = st.node.config
        duration = c.single_qubit_gate_time if len(qubits) == 1 else c.two_qubit_gate_time

        def action():
            self.reg.apply_gate(gate, qubits)
            self._gate_noise(st.node, gate, qubits)

        yield from self._occupy(node, duration, f"{gate} {list(positions)}", qubits, action)

    def correct(self, node: str, gate: GateSpec, pos: int) -> Generator:
        """A classically controlled correction that was triggered."""
        st = self.qpus[node]
        q = self.qubit_at(node, pos)
        duration = st.node.config.single_qubit_gate_time if self.conv.correction_time == "gate" else 0.0

        def action():
            self.reg.apply_gate(gate, [q])
            if self.conv.noisy_corrections:
                self._gate_noise(st.node, gate, [q])

        yield from self._occupy(node, duration, f"correct {gate} [{pos}]", [q], action)

    def measure(self, node: str, pos: int, basis: str = "Z") -> Generator:
        st = self.qpus[node]
        q = self.qubit_at(node, pos)
        p_err = st.node.config.meas_error_prob

        def action():
            if self.conv.readout_error == "depolarize":
                self.reg.catch_up(q)
                self.reg.apply_depolarizing([q], p_err)
                return self.reg.measure(q, basis, 0.0)
            return self.reg.measure(q, basis, p_err)

        return (
            yield from self._occupy(
                node, st.node.config.measurement_time, f"MEASURE {basis} [{pos}]", [q], action
            )
        )

    def swap_internal(self, node: str, src: int, dst: int) -> Generator:
        """Move the qubit at ``src`` into the empty position ``dst``.

        Modelled as a SWAP gate with a fresh |0> at ``dst``: timed and
        noisy like any two-qubit gate. ``src`` is left holding the |0>.
        """
        st = self.qpus[node]
        st.node.check_position(dst)
        q = self.qubit_at(node, src)
        if st.memory[dst] is not None and st.memory[dst].alive:
            raise HardwareError(f"{node}: SWAP_INTERNAL target position {dst} is occupied")
        c = st.node.config

        def action():
            self.reg.catch_up(q)
            (blank,) = self.reg.init_qubits(1, self._rate(st.node, src), [f"{node}[{src}]"])
            st.memory[dst], st.memory[src] = q, blank
            q.rate = self._rate(st.node, dst)
            q.name = f"{node}[{dst}]"
            self._gate_noise(st.node, GateSpec("SWAP"), [q, blank])
            return blank

        blank = yield from self._occupy(
            node, c.two_qubit_gate_time, f"SWAP_INTERNAL [{src}] -> [{dst}]", [q], action
        )
        if not self.conv.memory_noise_during_gates and blank.alive:
            blank.last_touched = self.kernel.now()

    # -- entanglement ------------------------------------------------------

    def request_entanglement(
        self, node: str, peer: str, token: str, position: Optional[int] = None
    ) -> Generator:
        """Block until an entangled pair shared with ``peer`` is delivered.

        Both endpoints must request with the same ``token``. Returns the comm
        position holding this node's half.
        """
        conn = self.network.quantum_link(node, peer)
        if position is not None and not self.qpus[node].node.is_comm(position):
            raise HardwareError(f"{node}: position {position} is not a comm position")
        rv = self._rendezvous.get(token)
        if rv is None:
            rv = _Rendezvous(
                token,
                self.kernel.signal(f"entanglement {token} between {node} and {peer}"),
                (node, position),
            )
            self._rendezvous[token] = rv
        else:
            if rv.second is not None or rv.first[0] != peer:
                raise HardwareError(f"entanglement token {token} reused or mismatched")
            rv.second = (node, position)
            rv.time = self.kernel.now()
            self.kernel.spawn(f"source {token}", self._deliver(rv, conn))
        yield rv.signal
        return rv.positions[node]

    def _claim(self, node: str, want: Optional[int]) -> Generator:
        st = self.qpus[node]
        while True:
            if want is None and st.comm_free:
                pos = min(st.comm_free)
                break
            if want is not None and want in st.comm_free:
                pos = want
                break
            sig = self.kernel.signal(f"free comm qubit on {node}")
            st.free_waiters.append(sig)
            yield sig
        st.comm_free.discard(pos)
        return pos

    def _deliver(self, rv: _Rendezvous, conn: ConnectionConfig) -> Generator:
        for node, want in (rv.first, rv.second):
            rv.positions[node] = yield from self._claim(node, want)
        start = self.kernel.now()
        if conn.delay > 0:
            yield self.kernel.timeout(conn.delay, f"link delay {rv.token}")
        qubits = []
        for node, _ in (rv.first, rv.second):
            st = self.qpus[node]
            pos = rv.positions[node]
            old = st.memory[pos]
            if old is not None and old.alive:
                self.reg.discard(old)
            (q,) = self.reg.init_qubits(1, self._rate(st.node, pos), [f"{node}[{pos}]"])
            st.memory[pos] = q
            qubits.append(q)
        self.reg.prepare(qubits, conn.state4distribution)
        self.deliveries.append((rv.token, start, self.kernel.now()))
        del self._rendezvous[rv.token]
        rv.signal.fire(dict(rv.positions))

    def free_comm_qubit(self, node: str, pos: int) -> None:
        st = self.qpus[node]
        if not st.node.is_comm(pos):
            raise HardwareError(f"{node}: position {pos} is not a comm position")
        if pos in st.comm_free:
            raise HardwareError(f"{node}: comm position {pos} is already free")
        q = st.memory[pos]
        if q is not None and q.alive:
            self.reg.discard(q)
        st.memory[pos] = None
        st.comm_free.add(pos)
        waiters, st.free_waiters = st.free_waiters, []
        for sig in waiters:
            sig.fire()

    def discard(self, node: str, pos: int) -> None:
        """Release a position: comm positions return to the free pool."""
        st = self.qpus[node]
        st.node.check_position(pos)
        if st.node.is_comm(pos):
            self.free_comm_qubit(node, pos)
            return
        q = st.memory[pos]
        if q is None or not q.alive:
            raise HardwareError(f"{node}: position {pos} holds no qubit")
        self.reg.discard(q)
        st.memory[pos] = None

    # -- classical messaging -----------------------------------------------

    def send_classical(self, src: str, dst: str, tag: str, bits: Any) -> None:
        delay = self.network.classical_delay(src, dst)
        key = (src, dst, tag)
        self.kernel.schedule(delay, self._arrive, (key, bits), label=f"msg {src}->{dst} {tag}")

    def _arrive(self, item) -> None:
        key, bits = item
        self._mail[key].append(bits)
        sig = self._mail_waiters.pop(key, None)
        if sig is not None:
            sig.fire()

    def recv_classical(self, dst: str, src: str, tag: str) -> Generator:
        self.network.classical_delay(src, dst)
        key = (src, dst, tag)
        while not self._mail[key]:
            sig = self.kernel.signal(f"message {tag!r} from {src}")
            self._mail_waiters[key] = sig
            yield sig
        return self._mail[key].popleft()
