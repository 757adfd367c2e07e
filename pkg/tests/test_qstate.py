import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from conftest import random_density_matrix, random_ket
from dqcsim.qstate import (
    BranchImpossible,
    Formalism,
    GateSpec,
    StateRegistry,
    bell_state,
    memory_depolar_prob,
    werner_state,
)


class Clock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t


def registry(formalism="dm", seed=0, chooser=None):
    clock = Clock()
    return StateRegistry(formalism, np.random.default_rng(seed), clock, chooser), clock


def assert_valid_dm(rho, atol=1e-10):
    assert np.allclose(rho, rho.conj().T, atol=atol)
    assert abs(np.trace(rho) - 1) < atol
    assert np.linalg.eigvalsh(rho).min() > -atol


# -- gates -------------------------------------------------------------------


@pytest.mark.parametrize("name", ["H", "X", "Y", "Z", "S", "T"])
def test_fixed_single_qubit_matrices(name):
    assert np.allclose(GateSpec(name).matrix, O.ONE_QUBIT[name])


@pytest.mark.parametrize(
    "name,oracle", [("RX", O.rx), ("RY", O.ry), ("RZ", O.rz)]
)
@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 2, -2.1, math.pi])
def test_rotation_matrices(name, oracle, theta):
    assert np.allclose(GateSpec(name, (theta,)).matrix, oracle(theta))


def test_u_matrix_and_special_cases():
    assert np.allclose(GateSpec("U", (0.4, 1.1, -0.7)).matrix, O.u3(0.4, 1.1, -0.7))
    assert np.allclose(GateSpec("U", (math.pi / 2, 0, math.pi)).matrix, O.Hd)


def test_gatespec_validation():
    with pytest.raises(ValueError):
        GateSpec("FOO")
    with pytest.raises(ValueError):
        GateSpec("RX")
    with pytest.raises(ValueError):
        GateSpec("H", (1.0,))
    assert GateSpec("CNOT").arity == 2
    assert GateSpec("INIT").arity is None
    assert str(GateSpec("RZ", (0.5,))) == "RZ(0.5)"


def test_apply_gate_matches_dense_embedding():
    rng = np.random.default_rng(1)
    for _ in range(30):
        reg, _ = registry()
        qs = reg.init_qubits(3)
        rho = random_density_matrix(rng, 3)
        reg.prepare(qs, rho)
        c, t = rng.choice(3, size=2, replace=False)
        reg.apply_gate(GateSpec("CNOT"), [qs[c], qs[t]])
        reg.apply_gate(GateSpec("RY", (0.7,)), [qs[t]])
        U = O.embed({t: O.ry(0.7)}, 3) @ O.controlled(O.X, c, t, 3)
        assert np.allclose(reg.reduced_dm(qs), U @ rho @ U.conj().T, atol=1e-12)


def test_apply_gate_rejects_bad_targets():
    reg, _ = registry()
    a, b = reg.init_qubits(2)
    with pytest.raises(ValueError):
        reg.apply_gate(GateSpec("CNOT"), [a, a])
    with pytest.raises(ValueError):
        reg.apply_gate(GateSpec("H"), [a, b])
    reg.discard(b)
    with pytest.raises(ValueError):
        reg.apply_gate(GateSpec("X"), [b])


def test_swap_gate():
    reg, _ = registry()
    a, b = reg.init_qubits(2)
    reg.apply_gate(GateSpec("X"), [a])
    reg.apply_gate(GateSpec("SWAP"), [a, b])
    assert np.allclose(reg.reduced_dm([a, b]), np.diag([0, 1, 0, 0]))


# -- channels vs oracles -------------------------------------------------------


def test_werner_state_matches_oracle():
    for F in np.linspace(0, 1, 21):
        assert np.allclose(werner_state(F), O.werner(F), atol=1e-14)
        assert abs(np.real(bell_state().conj() @ werner_state(F) @ bell_state()) - F) < 1e-14
    with pytest.raises(ValueError):
        werner_state(1.2)


@pytest.mark.parametrize("targets", [(0,), (1,), (0, 1), (1, 0)])
def test_depolarizing_matches_kraus_oracle(targets):
    rng = np.random.default_rng(sum(targets) + 10 * len(targets))
    for _ in range(25):
        p = rng.random()
        rho = random_density_matrix(rng, 2)
        reg, _ = registry()
        qs = reg.init_qubits(2)
        reg.prepare(qs, rho)
        reg.apply_depolarizing([qs[i] for i in targets], p)
        expected = O.apply_kraus(rho, O.depolarizing_kraus(targets, 2, p))
        assert np.allclose(reg.reduced_dm(qs), expected, atol=1e-12)


def test_memory_catch_up_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(25):
        rate = rng.uniform(0, 5e3)
        dt = rng.uniform(0, 2e6)
        rho = random_density_matrix(rng, 2)
        reg, clock = registry()
        a, b = reg.init_qubits(2, rate=rate)
        reg.prepare([a, b], rho)
        clock.t = dt
        reg.catch_up(a)
        p = O.memory_probability(rate, dt)
        assert memory_depolar_prob(rate, dt) == pytest.approx(p, abs=1e-15)
        expected = O.apply_kraus(rho, O.depolarizing_kraus([0], 2, p))
        assert np.allclose(reg.reduced_dm([a, b]), expected, atol=1e-12)
        # a second catch-up at the same instant is a no-op
        reg.catch_up(a)
        assert np.allclose(reg.reduced_dm([a, b]), expected, atol=1e-12)


def test_catch_up_before_gate_uses_elapsed_time():
    reg, clock = registry()
    (q,) = reg.init_qubits(1, rate=1e6)
    clock.t = 1000.0
    reg.apply_gate(GateSpec("X"), [q])
    p = O.memory_probability(1e6, 1000.0)
    rho0 = np.diag([1, 0]).astype(complex)
    expected = O.X @ O.apply_kraus(rho0, O.depolarizing_kraus([0], 1, p)) @ O.X
    assert np.allclose(reg.reduced_dm([q]), expected)


def test_catch_up_refuses_time_travel():
    reg, clock = registry()
    (q,) = reg.init_qubits(1, rate=1.0)
    clock.t = 10
    reg.catch_up(q)
    clock.t = 5
    with pytest.raises(ValueError):
        reg.catch_up(q)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 2**31),
    st.floats(0, 1),
    st.sampled_from([(0,), (2,), (0, 1), (2, 0), (0, 1, 2)]),
)
def test_depolarizing_keeps_a_valid_state(seed, p, targets):
    rng = np.random.default_rng(seed)
    reg, _ = registry()
    qs = reg.init_qubits(3)
    reg.prepare(qs, random_density_matrix(rng, 3, rank=2))
    reg.apply_depolarizing([qs[i] for i in targets], p)
    assert_valid_dm(reg.reduced_dm(qs))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_full_depolarizing_gives_maximally_mixed_marginal(seed):
    rng = np.random.default_rng(seed)
    reg, _ = registry()
    qs = reg.init_qubits(2)
    reg.prepare(qs, random_density_matrix(rng, 2))
    reg.apply_depolarizing([qs[0]], 1.0)
    assert np.allclose(reg.reduced_dm([qs[0]]), np.eye(2) / 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_partial_trace_matches_explicit_sum(seed):
    rng = np.random.default_rng(seed)
    reg, _ = registry()
    qs = reg.init_qubits(3)
    rho = random_density_matrix(rng, 3)
    reg.prepare(qs, rho)
    for keep in ([0], [2], [2, 0], [1, 2]):
        assert np.allclose(reg.reduced_dm([qs[i] for i in keep]), O.reduce_to(rho, keep, 3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_fidelity_is_a_probability(seed):
    rng = np.random.default_rng(seed)
    reg, _ = registry()
    qs = reg.init_qubits(2)
    rho = random_density_matrix(rng, 2)
    reg.prepare(qs, rho)
    psi = random_ket(rng, 2)
    f = reg.fidelity(qs, psi)
    assert -1e-12 <= f <= 1 + 1e-12
    assert f == pytest.approx(np.real(psi.conj() @ rho @ psi), abs=1e-12)


def test_fidelity_normalises_target():
    reg, _ = registry()
    qs = reg.init_qubits(2)
    reg.prepare(qs, np.outer(bell_state(), bell_state().conj()))
    assert reg.fidelity(qs, [1, 0, 0, 1]) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        reg.fidelity(qs, [1, 0])


# -- ket / DM agreement --------------------------------------------------------

_GATES_1 = ["H", "X", "Y", "Z", "S", "T"]
_GATES_P = ["RX", "RY", "RZ"]


def _random_circuit(rng, n, depth):
    out = []
    for _ in range(depth):
        kind = rng.integers(4)
        if kind == 0:
            out.append((GateSpec(_GATES_1[rng.integers(6)]), [int(rng.integers(n))]))
        elif kind == 1:
            out.append((GateSpec(_GATES_P[rng.integers(3)], (float(rng.normal()),)), [int(rng.integers(n))]))
        elif kind == 2:
            out.append((GateSpec("U", tuple(float(x) for x in rng.normal(size=3))), [int(rng.integers(n))]))
        else:
            a, b = rng.choice(n, size=2, replace=False)
            out.append((GateSpec(["CNOT", "CZ", "SWAP"][rng.integers(3)]), [int(a), int(b)]))
    return out


def test_ket_and_dm_agree_on_random_circuits():
    rng = np.random.default_rng(2024)
    for _ in range(120):
        n = int(rng.integers(2, 5))
        circ = _random_circuit(rng, n, int(rng.integers(1, 15)))
        ket, _ = registry("ket")
        dm, _ = registry("dm")
        kq, dq = ket.init_qubits(n), dm.init_qubits(n)
        for g, idx in circ:
            ket.apply_gate(g, [kq[i] for i in idx])
            dm.apply_gate(g, [dq[i] for i in idx])
        rho_ket = ket.reduced_dm(kq)
        assert np.allclose(rho_ket, dm.reduced_dm(dq), atol=1e-10)
        # independent dense-matrix evolution
        psi = np.zeros(2**n, dtype=complex)
        psi[0] = 1
        for g, idx in circ:
            if g.name == "SWAP":
                U = O.swap(idx[0], idx[1], n)
            elif g.arity == 2:
                U = O.controlled(g.controlled_base.matrix, idx[0], idx[1], n)
            else:
                U = O.embed({idx[0]: g.matrix}, n)
            psi = U @ psi
        assert np.allclose(rho_ket, np.outer(psi, psi.conj()), atol=1e-10)


def test_ket_depolarizing_sampler_is_unbiased():
    rng = np.random.default_rng(5)
    psi = random_ket(rng, 2)
    rho = np.outer(psi, psi.conj())
    p = 0.6
    acc = np.zeros((4, 4), dtype=complex)
    n = 4000
    reg, _ = registry("ket", seed=11)
    for _ in range(n):
        qs = reg.init_qubits(2)
        reg.prepare(qs, rho)
        reg.apply_depolarizing(qs, p)
        acc += reg.reduced_dm(qs)
    expected = O.apply_kraus(rho, O.depolarizing_kraus([0, 1], 2, p))
    assert np.abs(acc / n - expected).max() < 0.03


# -- measurement --------------------------------------------------------------


def test_measurement_statistics_of_plus_state():
    reg, _ = registry("ket", seed=9)
    ones = 0
    for _ in range(4000):
        (q,) = reg.init_qubits(1)
        reg.apply_gate(GateSpec("H"), [q])
        ones += reg.measure(q)
    assert 0.47 < ones / 4000 < 0.53


def test_x_basis_measurement_of_plus_is_deterministic():
    for form in ("ket", "dm"):
        reg, _ = registry(form, seed=1)
        for _ in range(20):
            (q,) = reg.init_qubits(1)
            reg.apply_gate(GateSpec("H"), [q])
            assert reg.measure(q, "X") == 0


@pytest.mark.parametrize("f", [0.0, 0.1, 0.5, 1.0])
@pytest.mark.parametrize("forced", [0, 1])
def test_dm_readout_flip_conditions_on_reported_bit(f, forced):
    rng = np.random.default_rng(int(100 * f) + forced)
    rho = random_density_matrix(rng, 2)
    seen = []

    def chooser(p1):
        seen.append(p1)
        return forced

    reg, _ = registry(chooser=chooser)
    a, b = reg.init_qubits(2)
    reg.prepare([a, b], rho)
    bit = reg.measure(a, flip_prob=f)
    assert bit == forced
    Pr = O.embed({0: O.P1 if forced else O.P0}, 2)
    Po = O.embed({0: O.P0 if forced else O.P1}, 2)
    unnorm = (1 - f) * Pr @ rho @ Pr + f * Po @ rho @ Po
    p_true1 = np.real(np.trace(O.embed({0: O.P1}, 2) @ rho))
    assert seen[0] == pytest.approx((1 - f) * p_true1 + f * (1 - p_true1), abs=1e-12)
    assert np.allclose(reg.reduced_dm([a, b]), unnorm / np.trace(unnorm), atol=1e-12)


def test_forcing_an_impossible_outcome_raises():
    for form in ("ket", "dm"):
        reg, _ = registry(form, chooser=lambda p1: 1)
        (q,) = reg.init_qubits(1)
        with pytest.raises(BranchImpossible):
            reg.measure(q)


def test_measure_rejects_unknown_basis():
    reg, _ = registry()
    (q,) = reg.init_qubits(1)
    with pytest.raises(ValueError):
        reg.measure(q, "Y")


def test_discard_traces_out_in_dm():
    reg, _ = registry()
    a, b = reg.init_qubits(2)
    reg.prepare([a, b], np.outer(bell_state(), bell_state().conj()))
    reg.discard(a)
    assert not a.alive
    assert np.allclose(reg.reduced_dm([b]), np.eye(2) / 2)
    with pytest.raises(ValueError):
        reg.discard(a)


def test_init_resets_to_zero():
    reg, _ = registry()
    a, b = reg.init_qubits(2)
    reg.apply_gate(GateSpec("H"), [a])
    reg.apply_gate(GateSpec("CNOT"), [a, b])
    reg.apply_gate(GateSpec("INIT"), [a])
    assert np.allclose(reg.reduced_dm([a]), np.diag([1, 0]))
    assert np.allclose(reg.reduced_dm([b]), np.eye(2) / 2)


def test_formalism_enum():
    assert Formalism("ket") is Formalism.KET
    with pytest.raises(ValueError):
        Formalism("stab")
