"""Discrete-event simulator for distributed quantum circuits."""

from .circuit import (
    Circuit,
    DistributedGate,
    LogicalQubitMap,
    MonolithicGate,
    Scheme,
    distributed,
    partition_contiguous,
    partition_for_network,
    validate_distributed,
)
from .compiler import CompiledProgram, Instruction, compile_circuit
from .hardware import (
    ConnectionConfig,
    DqcNetwork,
    NoiseConventions,
    QpuConfig,
    build_dqc,
)
from .kernel import DeadlockError, Kernel, SimulationError
from .qasm import load_qasm, lower_to_circuit, parse_qasm, unparse
from .qstate import Formalism, GateSpec, StateRegistry, bell_state, werner_state
from .runtime import (
    FidelitySpec,
    RunResult,
    Scenario,
    enumerate_branches,
    make_fidelity_collector,
    run_master,
    run_shots,
)

__all__ = [
    "Circuit",
    "CompiledProgram",
    "ConnectionConfig",
    "DeadlockError",
    "DistributedGate",
    "DqcNetwork",
    "FidelitySpec",
    "Formalism",
    "GateSpec",
    "Instruction",
    "Kernel",
    "LogicalQubitMap",
    "MonolithicGate",
    "NoiseConventions",
    "QpuConfig",
    "RunResult",
    "Scenario",
    "Scheme",
    "SimulationError",
    "StateRegistry",
    "bell_state",
    "build_dqc",
    "compile_circuit",
    "distributed",
    "enumerate_branches",
    "load_qasm",
    "lower_to_circuit",
    "make_fidelity_collector",
    "parse_qasm",
    "partition_contiguous",
    "partition_for_network",
    "run_master",
    "run_shots",
    "unparse",
    "validate_distributed",
    "werner_state",
]
