import itertools as it

import numpy as np
import pytest

from dqcsim import Scenario, build_dqc, make_fidelity_collector, werner_state
from dqcsim.circuit import CNOT, H, INIT

PHI_PLUS = np.array([1, 0, 0, 1]) / np.sqrt(2)

BASE_QPU = dict(
    single_qubit_gate_time=135 * 10**3,
    two_qubit_gate_time=600 * 10**3,
    measurement_time=600 * 10**4,
    num_positions=10,
    num_comm_qubits=2,
)
ENT_DELAY = 1e9 / 182


def three_qpu_network(F=1.0, p_cnot=0.0, p_1q=0.0, p_meas=0.0, rate=0.0, conventions=None, **extra):
    kw = dict(BASE_QPU)
    kw.update(extra)
    return build_dqc(
        3,
        [(0, 1)],
        list(it.combinations(range(3), 2)),
        conventions=conventions,
        p_depolar_error_cnot=p_cnot,
        single_qubit_gate_error_prob=p_1q,
        meas_error_prob=p_meas,
        comm_qubit_depolar_rate=rate,
        proc_qubit_depolar_rate=rate,
        delay=ENT_DELAY,
        state4distribution=werner_state(F),
        **kw,
    )


def bell_scenario(network, scheme="cat", formalism="dm"):
    q = [network.get_node(f"node_{i}").processing_qubit_positions[0:3] for i in range(3)]
    gates = [
        (INIT, q[0], "node_0"),
        (INIT, q[1], "node_1"),
        (INIT, q[2], "node_2"),
        (H, q[0][0], "node_0"),
        (CNOT, q[0][0], "node_0", q[1][0], "node_1", scheme),
    ]
    dc = make_fidelity_collector([(q[0][0], "node_0"), (q[1][0], "node_1")], PHI_PLUS)
    return Scenario(network, gates, dc, formalism)


def random_density_matrix(rng, n_qubits, rank=None):
    d = 2**n_qubits
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_ket(rng, n_qubits):
    v = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return v / np.linalg.norm(v)


@pytest.fixture
def base_network():
    return three_qpu_network()


def remote_gate_case(network, scheme, angles_c, angles_t, gate=CNOT, reverse=False):
    """Product input U(angles_c)|0> (x) U(angles_t)|0>, then one remote gate.

    The control lives on node_0 (node_1 when ``reverse``). Returns the
    scenario and the ideal output state from dense matrices.
    """
    from dqcsim.circuit import U

    import oracles as O

    cn, tn = ("node_1", "node_0") if reverse else ("node_0", "node_1")
    gates = [
        (INIT, [2, 3], cn),
        (INIT, [2, 3], tn),
        (U(*angles_c), 2, cn),
        (U(*angles_t), 2, tn),
        (gate, 2, cn, 2, tn, scheme),
    ]
    psi = np.kron(O.u3(*angles_c)[:, 0], O.u3(*angles_t)[:, 0])
    base = O.X if gate.name == "CNOT" else O.Z
    psi = O.controlled(base, 0, 1, 2) @ psi
    dc = make_fidelity_collector([(2, cn), (2, tn)], psi)
    return Scenario(network, gates, dc, "dm"), psi


# acceptance criteria report one line each in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
