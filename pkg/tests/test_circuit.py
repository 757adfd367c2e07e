import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import three_qpu_network
from dqcsim.circuit import (
    CNOT,
    CZ,
    INIT,
    RZ,
    Circuit,
    CircuitError,
    DistributedGate,
    H,
    LogicalQubitMap,
    MonolithicGate,
    Scheme,
    X,
    distributed,
    format_circuit_text,
    gate_from_name,
    parse_circuit_text,
    partition_contiguous,
    partition_for_network,
    validate_distributed,
)
from dqcsim.qstate import GateSpec


def test_gate_names_accept_instr_prefix_and_aliases():
    assert gate_from_name("INSTR_CNOT") == CNOT
    assert gate_from_name("cx") == CNOT
    assert gate_from_name("rz", (0.5,)) == RZ(0.5)
    with pytest.raises(ValueError):
        gate_from_name("toffoli")


def test_distributed_tuple_forms():
    g = DistributedGate.from_tuple((INIT, [2, 3, 4], "node_0"))
    assert g.operands == ((2, "node_0"), (3, "node_0"), (4, "node_0"))
    r = DistributedGate.from_tuple((CNOT, 2, "node_0", 2, "node_1", "cat"))
    assert r.is_remote and r.scheme is Scheme.CAT
    assert DistributedGate.from_tuple(r.to_tuple()) == r
    with pytest.raises(CircuitError):
        DistributedGate.from_tuple((CNOT, 2, "node_0", 2))


def test_monolithic_tuples_round_trip():
    c = Circuit.from_tuples([(H, 0), (CNOT, 0, 2), (GateSpec("MEASURE"), 2, 1)])
    assert c.num_qubits == 3 and c.num_clbits == 2
    assert c.gates[2] == MonolithicGate(GateSpec("MEASURE"), (2,), 1)
    assert Circuit.from_tuples(c.to_tuples()) == c


def test_qubit_map_is_injective():
    m = LogicalQubitMap()
    m.place("a", "node_0", 2)
    with pytest.raises(CircuitError):
        m.place("b", "node_0", 2)
    m.move("a", "node_1", 3)
    assert m.location("a") == ("node_1", 3)
    assert m.logical_at("node_0", 2) is None
    m.place("b", "node_0", 2)
    assert m.occupied("node_0") == {2}


def test_contiguous_partition_places_blocks():
    c = Circuit.from_tuples([(H, 0), (CNOT, 0, 1), (CNOT, 1, 2), (X, 3)])
    gates, qmap = partition_contiguous(c, [2, 2], "1tp", position_offset=[2, 2])
    assert gates[0] == DistributedGate(INIT, ((2, "node_0"), (3, "node_0")))
    assert gates[1] == DistributedGate(INIT, ((2, "node_1"), (3, "node_1")))
    assert gates[3] == DistributedGate(CNOT, ((2, "node_0"), (3, "node_0")))
    assert gates[4] == DistributedGate(CNOT, ((3, "node_0"), (2, "node_1")), Scheme.TP1)
    assert qmap.location(3) == ("node_1", 3)
    with pytest.raises(CircuitError):
        partition_contiguous(c, [1, 1])


def test_partition_for_network_respects_comm_positions():
    net = three_qpu_network()
    c = Circuit.from_tuples([(H, 0), (CNOT, 0, 9)])
    gates, qmap = partition_for_network(c, net)
    assert qmap.location(0) == ("node_0", 2)
    assert qmap.location(9) == ("node_1", 3)
    assert validate_distributed(gates, net) == []


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.lists(st.integers(1, 8), min_size=1, max_size=4))
def test_partition_preserves_gate_count_and_qubits(n, caps):
    if sum(caps) < n:
        return
    c = Circuit.from_tuples([(H, i) for i in range(n)] + [(CNOT, 0, n - 1)] * (n > 1))
    gates, qmap = partition_contiguous(c, caps)
    body = [g for g in gates if g.gate != INIT]
    assert len(body) == len(c.gates)
    assert len(qmap) == n
    assert len({qmap.location(i) for i in range(n)}) == n


@pytest.mark.parametrize(
    "tuples,needle",
    [
        ([(H, 2, "node_7")], "unknown node"),
        ([(H, 12, "node_0")], "no position"),
        ([(H, 0, "node_0")], "comm"),
        ([(CNOT, 2, "node_0", 2, "node_1")], "scheme"),
        ([(CNOT, 2, "node_0", 3, "node_0", "cat")], "scheme"),
        ([(CNOT, 2, "node_0", 2, "node_2", "cat")], "quantum link"),
        ([(GateSpec("SWAP"), 2, "node_0", 2, "node_1", "cat")], "cat"),
        ([(CNOT, 2, "node_0")], "operand"),
    ],
)
def test_validation_diagnostics(tuples, needle):
    diags = validate_distributed(distributed(tuples), three_qpu_network())
    assert diags and any(needle in d for d in diags), diags


def test_valid_circuit_has_no_diagnostics():
    gates = distributed(
        [(INIT, [2, 3], "node_0"), (INIT, [2], "node_1"), (H, 2, "node_0"),
         (CZ, 2, "node_0", 2, "node_1", "2tp"), (CNOT, 2, "node_1", 3, "node_0", "tp_safe")]
    )
    assert validate_distributed(gates, three_qpu_network()) == []


def test_circuit_text_round_trip():
    text = """
    # comment
    INIT 2@node_0 3@node_0
    H 2@node_0
    RZ(0.25) 3@node_0
    CNOT 2@node_0 2@node_1 tp_safe
    MEASURE 2@node_0 -> c0
    """
    gates = parse_circuit_text(text)
    assert gates[3].scheme is Scheme.TP_SAFE
    assert gates[4].cbit == 0
    assert parse_circuit_text(format_circuit_text(gates)) == gates


def test_circuit_text_errors_name_the_line():
    with pytest.raises(CircuitError, match="line 2"):
        parse_circuit_text("H 2@node_0\nCNOT 2@node_0 2@node_1 telepathy\n")
    with pytest.raises(CircuitError, match="line 1"):
        parse_circuit_text("FOO 2@node_0\n")
