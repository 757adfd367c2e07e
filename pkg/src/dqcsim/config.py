"""TOML scenario files: load, override, validate, dump.

Schema (all sections optional except ``software``)::

    [hardware]
    num_qpus = 3
    quantum_topology = [[0, 1]]
    classical_topology = [[0, 1], [0, 2], [1, 2]]
    classical_delay_ns = 0.0

    [hardware.qpu]            # any QpuConfig field
    p_depolar_error_cnot = 1e-3

    [hardware.connection]     # exactly one of delay_ns / ent_dist_rate_hz
    ent_dist_rate_hz = 182    # and at most one of werner_fidelity / state
    werner_fidelity = 0.9

    [hardware.conventions]    # any NoiseConventions field
    correction_time = "zero"

    [software]                # exactly one of circuit_file / circuit
    circuit_file = "bell_cat.dqc"   # .qasm files are partitioned first
    default_scheme = "cat"
    partitioner = { name = "contiguous" }

    [run]
    formalism = "dm"
    seed = 0
    shots = 1
    [run.collector]
    targets = [[2, "node_0"], [2, "node_1"]]
    desired_state = "phi_plus"    # or amplitudes: reals or [re, im] pairs

Relative ``circuit_file`` paths resolve against the config file's directory.
"""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli
import tomli_w

from .circuit import (
    CircuitError,
    DistributedGate,
    LogicalQubitMap,
    partition_contiguous,
    partition_for_network,
    parse_circuit_text,
)
from .hardware import ConnectionConfig, DqcNetwork, NoiseConventions, QpuConfig, build_dqc
from .qasm import QasmError, load_qasm
from .runtime import FidelitySpec, Scenario


class ConfigError(ValueError):
    pass


PARTITIONERS = {"contiguous": partition_contiguous}

NAMED_STATES = {
    "phi_plus": np.array([1, 0, 0, 1]) / np.sqrt(2),
    "phi_minus": np.array([1, 0, 0, -1]) / np.sqrt(2),
    "psi_plus": np.array([0, 1, 1, 0]) / np.sqrt(2),
    "psi_minus": np.array([0, 1, -1, 0]) / np.sqrt(2),
}

_SECTIONS = {
    "": {"hardware", "software", "run"},
    "hardware": {
        "num_qpus",
        "quantum_topology",
        "classical_topology",
        "classical_delay_ns",
        "qpu",
        "connection",
        "conventions",
    },
    "hardware.connection": {"delay_ns", "ent_dist_rate_hz", "werner_fidelity", "state"},
    "software": {"circuit_file", "circuit", "partitioner", "default_scheme"},
    "run": {"formalism", "seed", "shots", "collector"},
    "run.collector": {"targets", "desired_state"},
}


def bundled_scenarios() -> list[str]:
    root = resources.files("dqcsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_config_path(name_or_path: str) -> Path:
    """A filesystem path, or the name of a bundled scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = resources.files("dqcsim") / "scenarios" / f"{name_or_path}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(
        f"no config file {name_or_path!r} (bundled scenarios: {', '.join(bundled_scenarios())})"
    )


def load_config(path: str | Path) -> dict:
    path = resolve_config_path(str(path))
    try:
        data = tomli.loads(path.read_text(encoding="utf-8"))
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    sw = data.get("software", {})
    if isinstance(sw.get("circuit_file"), str):
        cf = Path(sw["circuit_file"])
        if not cf.is_absolute():
            sw["circuit_file"] = str((path.parent / cf).resolve())
    return data


def parse_value(text: str) -> Any:
    """TOML literal if it parses as one, else the bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.path=value`` overrides, returning a new dict."""
    out = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        if not all(keys):
            raise ConfigError(f"bad override path {path!r}")
        d = out
        for k in keys[:-1]:
            d = d.setdefault(k, {})
            if not isinstance(d, dict):
                raise ConfigError(f"override {path!r} descends into a non-table")
        value = parse_value(raw.strip())
        d[keys[-1]] = value
        conn = out.get("hardware", {}).get("connection", {})
        # a rate and a delay are alternatives; the override wins
        if keys[:2] == ["hardware", "connection"] and len(keys) == 3:
            rivals = {"delay_ns": "ent_dist_rate_hz", "ent_dist_rate_hz": "delay_ns"}
            rivals.update({"werner_fidelity": "state", "state": "werner_fidelity"})
            conn.pop(rivals.get(keys[2], ""), None)
        if keys[:2] == ["software", "circuit_file"]:
            out["software"].pop("circuit", None)
        if keys[:2] == ["software", "circuit"]:
            out["software"].pop("circuit_file", None)
    return out


def dump_config(data: dict) -> str:
    return tomli_w.dumps(data)


def _check_keys(data: dict) -> None:
    for section, allowed in _SECTIONS.items():
        d = data
        for k in section.split(".") if section else []:
            d = d.get(k, {})
        if not isinstance(d, dict):
            raise ConfigError(f"[{section}] must be a table")
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown key(s) in [{section or 'top level'}]: {sorted(extra)}")


def _state_vector(spec: Any) -> np.ndarray:
    if isinstance(spec, str):
        if spec not in NAMED_STATES:
            raise ConfigError(f"unknown named state {spec!r} (known: {sorted(NAMED_STATES)})")
        return NAMED_STATES[spec].astype(complex)
    vec = []
    for a in spec:
        if isinstance(a, list):
            if len(a) != 2:
                raise ConfigError("complex amplitudes must be [re, im] pairs")
            vec.append(complex(a[0], a[1]))
        else:
            vec.append(complex(a))
    v = np.array(vec)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ConfigError("desired_state is the zero vector")
    return v / norm


def _state_matrix(spec: Any) -> np.ndarray:
    rows = []
    for row in spec:
        rows.append([complex(a[0], a[1]) if isinstance(a, list) else complex(a) for a in row])
    return np.array(rows)


def build_network(data: dict) -> DqcNetwork:
    hw = data.get("hardware", {})
    try:
        qpu = QpuConfig(**hw.get("qpu", {}))
        conv = NoiseConventions(**hw.get("conventions", {}))
    except TypeError as e:
        raise ConfigError(f"hardware: {e}") from None
    conn = hw.get("connection", {})
    if ("delay_ns" in conn) == ("ent_dist_rate_hz" in conn):
        raise ConfigError("hardware.connection needs exactly one of delay_ns / ent_dist_rate_hz")
    if "werner_fidelity" in conn and "state" in conn:
        raise ConfigError("hardware.connection takes werner_fidelity or state, not both")
    if "delay_ns" in conn:
        delay = float(conn["delay_ns"])
    else:
        rate = float(conn["ent_dist_rate_hz"])
        if rate <= 0:
            raise ConfigError("ent_dist_rate_hz must be positive")
        delay = 1e9 / rate
    if "state" in conn:
        cc = ConnectionConfig(delay, _state_matrix(conn["state"]))
    else:
        cc = ConnectionConfig.werner(float(conn.get("werner_fidelity", 1.0)), delay)
    n = int(hw.get("num_qpus", 2))
    return build_dqc(
        n,
        [tuple(p) for p in hw.get("quantum_topology", [])],
        [tuple(p) for p in hw.get("classical_topology", [])],
        qpu_config=qpu,
        conn_config=cc,
        classical_delay=float(hw.get("classical_delay_ns", 0.0)),
        conventions=conv,
    )


def build_circuit(data: dict, network: DqcNetwork) -> tuple[list[DistributedGate], Optional[LogicalQubitMap]]:
    sw = data.get("software", {})
    if ("circuit_file" in sw) == ("circuit" in sw):
        raise ConfigError("software needs exactly one of circuit_file / circuit")
    if "circuit" in sw:
        return parse_circuit_text(sw["circuit"]), None
    path = Path(sw["circuit_file"])
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read circuit file: {e}") from None
    if path.suffix != ".qasm":
        return parse_circuit_text(text), None
    circ = load_qasm(text)
    part = sw.get("partitioner", {"name": "contiguous"})
    if isinstance(part, str):
        part = {"name": part}
    if part.get("name") not in PARTITIONERS:
        raise ConfigError(f"unknown partitioner {part.get('name')!r} (known: {sorted(PARTITIONERS)})")
    return partition_for_network(
        circ, network, PARTITIONERS[part["name"]], sw.get("default_scheme", "cat")
    )


def build_scenario(data: dict) -> Scenario:
    """Turn a config dict into a runnable :class:`Scenario`.

    Raises :class:`ConfigError` for anything wrong with the inputs.
    """
    _check_keys(data)
    try:
        network = build_network(data)
        gates, qmap = build_circuit(data, network)
        run = data.get("run", {})
        collector = None
        if "collector" in run:
            c = run["collector"]
            targets = [(int(p), str(n)) for p, n in c.get("targets", [])]
            collector = FidelitySpec(targets, _state_vector(c["desired_state"]))
        return Scenario(network, gates, collector, run.get("formalism", "dm"), qmap)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, CircuitError, QasmError) as e:
        raise ConfigError(f"{type(e).__name__}: {e}") from None


def run_settings(data: dict) -> tuple[int, int]:
    run = data.get("run", {})
    seed, shots = run.get("seed", 0), run.get("shots", 1)
    if not isinstance(seed, int) or not isinstance(shots, int) or shots < 1:
        raise ConfigError("run.seed must be an integer and run.shots a positive integer")
    return seed, shots

