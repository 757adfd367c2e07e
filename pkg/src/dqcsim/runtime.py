"""Drive compiled per-QPU streams on the event kernel and collect results."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .circuit import DistributedGate, LogicalQubitMap, distributed
from .compiler import CompiledProgram, Instruction, compile_circuit
from .hardware import DqcNetwork, HardwareError, Machine
from .kernel import DeadlockError, Kernel, SimulationError
from .qstate import BranchImpossible, Formalism, StateRegistry


class RunFailure(SimulationError):
    pass


@dataclass
class FidelitySpec:
    """Which qubits to score at the end of a run, and against what."""

    targets: list[tuple[int, str]]
    desired: np.ndarray

    def __post_init__(self):
        self.desired = np.asarray(self.desired, dtype=complex).reshape(-1)
        self.targets = [(int(p), getattr(n, "name", n)) for p, n in self.targets]
        if self.desired.shape[0] != 2 ** len(self.targets):
            raise ValueError(
                f"desired state has dimension {self.desired.shape[0]} but "
                f"{len(self.targets)} target qubit(s) need {2 ** len(self.targets)}"
            )


def make_fidelity_collector(targets: Sequence[tuple[int, str]], desired) -> FidelitySpec:
    return FidelitySpec(list(targets), desired)


@dataclass
class WorkerState:
    qpu: str
    stream: list[Instruction]
    pc: int = 0
    classical_vars: dict[str, int] = field(default_factory=dict)
    status: str = "running"


@dataclass
class ShotRow:
    shot: int
    fidelity: Optional[float]
    final_time: float
    classical_bits: dict[str, int]
    seed: int
    error: Optional[str] = None


@dataclass
class RunResult:
    rows: list[ShotRow] = field(default_factory=list)

    @property
    def fidelities(self) -> list[Optional[float]]:
        return [r.fidelity for r in self.rows]

    def mean_fidelity(self) -> float:
        vals = [r.fidelity for r in self.rows if r.fidelity is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shot", "fidelity", "final_time_ns", "seed", "classical_bits", "error"])
        for r in self.rows:
            w.writerow(
                [
                    r.shot,
                    "" if r.fidelity is None else format(r.fidelity, ".17g"),
                    format(r.final_time, ".17g"),
                    r.seed,
                    ";".join(f"{k}={v}" for k, v in sorted(r.classical_bits.items())),
                    r.error or "",
                ]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        rows = []
        for r in self.rows:
            d = asdict(r)
            d["final_time_ns"] = d.pop("final_time")
            d["classical_bits"] = dict(sorted(r.classical_bits.items()))
            rows.append(d)
        return json.dumps({"rows": rows}, indent=2)


def _xor(values: Sequence[int]) -> int:
    out = 0
    for v in values:
        out ^= v
    return out


def _worker(m: Machine, ws: WorkerState, verbose: bool):
    node = ws.qpu
    for pc, ins in enumerate(ws.stream):
        ws.pc = pc
        if verbose:
            m.kernel.log(f"node={node} {ins}")
        try:
            if ins.op == "INIT":
                yield from m.init(node, ins.positions)
            elif ins.op == "APPLY":
                yield from m.execute_local(node, ins.gate, ins.positions)
            elif ins.op == "ENTANGLE":
                (want,) = ins.positions
                got = yield from m.request_entanglement(node, ins.peer, ins.tag, want)
                assert got == want
            elif ins.op == "MEASURE":
                bit = yield from m.measure(node, ins.positions[0], ins.basis)
                ws.classical_vars[ins.vars[0]] = bit
            elif ins.op == "SEND":
                bits = tuple(ws.classical_vars[v] for v in ins.vars)
                m.send_classical(node, ins.peer, ins.tag, bits)
            elif ins.op == "RECV":
                bits = yield from m.recv_classical(node, ins.peer, ins.tag)
                if len(bits) != len(ins.vars):
                    raise HardwareError(f"expected {len(ins.vars)} bits, got {len(bits)}")
                for v, bit in zip(ins.vars, bits):
                    ws.classical_vars[v] = bit
            elif ins.op == "COND_APPLY":
                if _xor([ws.classical_vars[v] for v in ins.vars]):
                    yield from m.correct(node, ins.gate, ins.positions[0])
            elif ins.op == "FREE":
                m.discard(node, ins.positions[0])
            elif ins.op == "SWAP_INTERNAL":
                yield from m.swap_internal(node, *ins.positions)
        except (HardwareError, KeyError, ValueError) as e:
            raise RunFailure(f"{node} pc={pc} ({ins}): {e}") from e
    ws.pc = len(ws.stream)
    ws.status = "done"


def run_master(
    program: CompiledProgram | dict[str, list[Instruction]],
    network: DqcNetwork,
    collector: Optional[FidelitySpec] = None,
    seed: int = 0,
    formalism: Formalism | str = Formalism.DM,
    outcome_chooser: Optional[Callable[[float], int]] = None,
    verbose: bool = False,
    return_machine: bool = False,
):
    """Execute one shot. Returns a :class:`ShotRow` (and the machine if asked).

    Collector targets name logical qubits by their starting location; they
    are resolved through the program's final qubit map.
    """
    if isinstance(program, dict):
        program = CompiledProgram(program, LogicalQubitMap(), LogicalQubitMap())
    kernel = Kernel(seed)
    reg = StateRegistry(formalism, kernel.rng, kernel.now, outcome_chooser)
    machine = Machine(network, kernel, reg)
    workers = {n: WorkerState(n, list(s)) for n, s in program.streams.items()}
    for n, ws in workers.items():
        kernel.spawn(f"worker {n}", _worker(machine, ws, verbose))
    try:
        final = kernel.run()
    except DeadlockError as e:
        blocked = []
        for name, what in e.blocked:
            node = name.removeprefix("worker ")
            if node in workers:
                ws = workers[node]
                ws.status = f"blocked({what})"
                blocked.append((f"{node} (pc={ws.pc}: {ws.stream[ws.pc]})", what))
            else:
                blocked.append((name, what))
        raise DeadlockError(blocked) from None
    fid = None
    if collector is not None:
        by_origin = {loc: lq for lq, loc in program.qmap_initial.items()}
        qubits = []
        for pos, node in collector.targets:
            lq = by_origin.get((node, pos))
            loc = program.qmap_final.location(lq) if lq is not None else (node, pos)
            qubits.append(machine.qubit_at(*loc))
        for q in qubits:
            reg.catch_up(q)
        fid = min(max(reg.fidelity(qubits, collector.desired), 0.0), 1.0)
    bits = {f"{n}.{k}": v for n, ws in workers.items() for k, v in ws.classical_vars.items()}
    row = ShotRow(0, fid, final, bits, seed)
    if return_machine:
        return row, machine
    return row


@dataclass
class Scenario:
    """Everything needed to run shots: hardware, circuit, scoring."""

    network: DqcNetwork
    circuit: list[DistributedGate]
    collector: Optional[FidelitySpec] = None
    formalism: Formalism | str = Formalism.DM
    qmap: Optional[LogicalQubitMap] = None

    def __post_init__(self):
        self.circuit = distributed(self.circuit)
        self.formalism = Formalism(self.formalism)

    def compile(self) -> CompiledProgram:
        return compile_circuit(self.circuit, self.network, self.qmap)


def _one_shot(args) -> ShotRow:
    scenario, program, shot, seed, fail_fast = args
    try:
        row = run_master(program, scenario.network, scenario.collector, seed, scenario.formalism)
    except SimulationError as e:
        if fail_fast:
            raise
        return ShotRow(shot, None, float("nan"), {}, seed, f"{type(e).__name__}: {e}")
    row.shot = shot
    return row


def run_shots(
    scenario: Scenario,
    n_shots: int = 1,
    base_seed: int = 0,
    fail_fast: bool = False,
    max_workers: int = 1,
) -> RunResult:
    """Run ``n_shots`` independent shots; shot k is seeded ``base_seed + k``."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    program = scenario.compile()
    jobs = [(scenario, program, k, base_seed + k, fail_fast) for k in range(n_shots)]
    if max_workers > 1 and n_shots > 1:
        with ProcessPoolExecutor(max_workers) as ex:
            rows = list(ex.map(_one_shot, jobs))
    else:
        rows = [_one_shot(j) for j in jobs]
    rows.sort(key=lambda r: r.shot)
    return RunResult(rows)


@dataclass
class Branch:
    outcomes: tuple[int, ...]
    probability: float
    fidelity: Optional[float]


def enumerate_branches(scenario: Scenario, max_branches: int = 4096) -> list[Branch]:
    """Run every measurement-outcome branch once (depth-first).

    Each branch forces its outcome sequence; its probability is the product
    of the Born probabilities of the forced outcomes. Only meaningful when
    nothing else is random, i.e. in the DM formalism.
    """
    program = scenario.compile()
    out: list[Branch] = []
    stack: list[tuple[int, ...]] = [()]
    while stack:
        prefix = stack.pop()
        taken: list[int] = []
        prob = [1.0]

        def chooser(p1: float) -> int:
            i = len(taken)
            bit = prefix[i] if i < len(prefix) else 0
            if i >= len(prefix):
                stack.append(tuple(taken) + (1,))
            taken.append(bit)
            prob[0] *= p1 if bit else 1 - p1
            return bit

        try:
            row = run_master(
                program, scenario.network, scenario.collector, 0, scenario.formalism, chooser
            )
        except BranchImpossible:
            continue
        if prob[0] > 0:
            out.append(Branch(tuple(taken), prob[0], row.fidelity))
        if len(out) > max_branches:
            raise RuntimeError(f"more than {max_branches} branches")
    out.sort(key=lambda b: b.outcomes)
    return out


def branch_spread(branches: Sequence[Branch], min_probability: float = 0.0) -> tuple[float, float]:
    """(min, max) fidelity over branches above ``min_probability``."""
    vals = [b.fidelity for b in branches if b.probability > min_probability and b.fidelity is not None]
    return min(vals), max(vals)
