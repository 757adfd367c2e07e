"""Ket and density-matrix backends over dynamically merged qubit groups.

Each live qubit belongs to exactly one :class:`JointState`. Multi-qubit
operations merge the groups involved by tensor product; measurement factors
the measured qubit back out whenever the result is a product state.

Ordering convention: the position of a qubit in ``JointState.qubits`` is its
tensor axis, and axis 0 is the most significant bit of the flat index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Formalism",
    "GateSpec",
    "Qubit",
    "JointState",
    "StateRegistry",
    "BranchImpossible",
    "werner_state",
    "bell_state",
    "depolarize_dm",
    "partial_trace",
    "memory_depolar_prob",
]


class Formalism(str, Enum):
    KET = "ket"
    DM = "dm"


class BranchImpossible(RuntimeError):
    """A forced measurement outcome has zero probability."""


# ---------------------------------------------------------------------------
# gates

_SQ2 = 1 / np.sqrt(2)
_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (_I2, _X, _Y, _Z)


def _u3(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ],
        dtype=complex,
    )


def _rx(t: float) -> np.ndarray:
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def _ry(t: float) -> np.ndarray:
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rz(t: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)]).astype(complex)


def _controlled(u: np.ndarray) -> np.ndarray:
    out = np.eye(4, dtype=complex)
    out[2:, 2:] = u
    return out


_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2,
    "X": _X,
    "Y": _Y,
    "Z": _Z,
    "S": np.diag([1, 1j]).astype(complex),
    "T": np.diag([1, np.exp(0.25j * np.pi)]).astype(complex),
    "CNOT": _controlled(_X),
    "CZ": _controlled(_Z),
    "SWAP": np.eye(4, dtype=complex)[[0, 2, 1, 3]],
}
_PARAMETRIC = {"RX": (_rx, 1), "RY": (_ry, 1), "RZ": (_rz, 1), "U": (_u3, 3)}
_PSEUDO = ("INIT", "MEASURE")
_ARITY = {"CNOT": 2, "CZ": 2, "SWAP": 2}
# target-side operator of controlled gates, used by cat-comm
_CONTROLLED_BASE = {"CNOT": "X", "CZ": "Z"}


@dataclass(frozen=True)
class GateSpec:
    """A named gate, optionally with real parameters.

    ``INIT`` (reset any number of qubits to ``|0>``) and ``MEASURE`` are
    pseudo-gates without a matrix.
    """

    name: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.name in _PSEUDO or self.name in _FIXED:
            if self.params:
                raise ValueError(f"gate {self.name} takes no parameters")
        elif self.name in _PARAMETRIC:
            nparams = _PARAMETRIC[self.name][1]
            if len(self.params) != nparams:
                raise ValueError(
                    f"gate {self.name} takes {nparams} parameter(s), "
                    f"got {len(self.params)}"
                )
            object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        else:
            raise ValueError(f"unknown gate {self.name!r}")

    @property
    def arity(self) -> Optional[int]:
        if self.name == "INIT":
            return None
        return _ARITY.get(self.name, 1)

    @property
    def matrix(self) -> np.ndarray:
        if self.name in _PSEUDO:
            raise ValueError(f"{self.name} has no matrix")
        if self.name in _FIXED:
            return _FIXED[self.name]
        return _PARAMETRIC[self.name][0](*self.params)

    @property
    def controlled_base(self) -> Optional["GateSpec"]:
        """For a controlled gate, the single-qubit gate applied on the target."""
        base = _CONTROLLED_BASE.get(self.name)
        return GateSpec(base) if base else None

    def __str__(self) -> str:
        if self.params:
            return f"{self.name}({','.join(repr(p) for p in self.params)})"
        return self.name


# ---------------------------------------------------------------------------
# pure helpers


def bell_state() -> np.ndarray:
    return np.array([1, 0, 0, 1], dtype=complex) * _SQ2


def werner_state(fidelity: float) -> np.ndarray:
    """Isotropic mixture of |Phi+> with white noise, scoring ``fidelity`` on |Phi+>."""
    if not 0 <= fidelity <= 1:
        raise ValueError(f"Werner fidelity must lie in [0, 1], got {fidelity}")
    phi = bell_state()
    proj = np.outer(phi, phi.conj())
    return fidelity * proj + (1 - fidelity) / 3 * (np.eye(4) - proj)


def _apply_op(tensor: np.ndarray, op: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    k = len(axes)
    op_t = op.reshape((2,) * (2 * k))
    res = np.tensordot(op_t, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(res, list(range(k)), list(axes))


def _split_axes(rho_t: np.ndarray, n: int, targets: Sequence[int]):
    """Permute a 2n-axis DM tensor to (T rows, T cols, rest rows, rest cols)."""
    rest = [a for a in range(n) if a not in targets]
    order = list(targets) + [n + a for a in targets] + rest + [n + a for a in rest]
    k, m = len(targets), len(rest)
    return np.transpose(rho_t, order).reshape(2**k, 2**k, 2**m, 2**m), rest, order


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on axes ``keep`` (in that order)."""
    n = int(np.log2(rho.shape[0]))
    blocks, _, _ = _split_axes(rho.reshape((2,) * (2 * n)), n, keep)
    return np.einsum("abcc->ab", blocks)


def depolarize_dm(rho: np.ndarray, targets: Sequence[int], p: float) -> np.ndarray:
    """rho -> (1-p) rho + p (I/2^k (x) tr_targets rho) on the target axes."""
    n = int(np.log2(rho.shape[0]))
    k = len(targets)
    blocks, _, order = _split_axes(rho.reshape((2,) * (2 * n)), n, targets)
    reduced = np.einsum("aacd->cd", blocks)
    eye = np.eye(2**k) / 2**k
    mixed = eye[:, :, None, None] * reduced[None, None, :, :]
    out = (1 - p) * blocks + p * mixed
    out = out.reshape((2,) * (2 * n))
    return np.transpose(out, np.argsort(order)).reshape(2**n, 2**n)


@lru_cache(maxsize=None)
def _pauli_strings(k: int) -> tuple[np.ndarray, ...]:
    """All non-identity k-qubit Pauli operators."""
    out = []
    for idx in itertools.product(range(4), repeat=k):
        if any(idx):
            op = np.array([[1.0 + 0j]])
            for i in idx:
                op = np.kron(op, PAULIS[i])
            out.append(op)
    return tuple(out)


def memory_depolar_prob(rate_hz: float, dt_ns: float) -> float:
    """Depolarizing probability accrued by an idle qubit over ``dt_ns``."""
    return 1 - np.exp(-rate_hz * dt_ns * 1e-9)


# ---------------------------------------------------------------------------
# state bookkeeping

_ids = itertools.count()


class Qubit:
    """Handle to one simulated qubit."""

    __slots__ = ("id", "state", "last_touched", "rate", "name")

    def __init__(self, last_touched: float, rate: float, name: str = ""):
        self.id = next(_ids)
        self.state: Optional[JointState] = None
        self.last_touched = last_touched
        self.rate = rate  # memory depolarizing rate in Hz
        self.name = name

    @property
    def alive(self) -> bool:
        return self.state is not None

    def __repr__(self) -> str:
        return f"Qubit({self.name or self.id})"


class JointState:
    """A state vector (ket) or density matrix shared by ``qubits``."""

    def __init__(self, qubits: list[Qubit], data: np.ndarray, formalism: Formalism):
        self.qubits = qubits
        self.data = data
        self.formalism = formalism
        for q in qubits:
            q.state = self

    @property
    def n(self) -> int:
        return len(self.qubits)

    def axis(self, q: Qubit) -> int:
        return self.qubits.index(q)

    def tensor(self) -> np.ndarray:
        if self.formalism is Formalism.KET:
            return self.data.reshape((2,) * self.n)
        return self.data.reshape((2,) * (2 * self.n))

    def set_tensor(self, t: np.ndarray) -> None:
        d = 2**self.n
        self.data = t.reshape(d) if self.formalism is Formalism.KET else t.reshape(d, d)

    def density_matrix(self) -> np.ndarray:
        if self.formalism is Formalism.KET:
            return np.outer(self.data, self.data.conj())
        return self.data

    def __repr__(self) -> str:
        return f"JointState({self.qubits}, {self.formalism.value})"


OutcomeChooser = Callable[[float], int]


class StateRegistry:
    """Owns every JointState of one simulation instance.

    ``clock`` supplies the current time in ns (used for lazy memory noise);
    ``rng`` is the simulation's single random stream. ``outcome_chooser``,
    when given, replaces random sampling of measurement outcomes; it receives
    the probability of outcome 1 and returns the bit to force.
    """

    def __init__(
        self,
        formalism: Formalism | str = Formalism.DM,
        rng: Optional[np.random.Generator] = None,
        clock: Callable[[], float] = lambda: 0.0,
        outcome_chooser: Optional[OutcomeChooser] = None,
    ):
        self.formalism = Formalism(formalism)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.clock = clock
        self.outcome_chooser = outcome_chooser

    # -- creation / merging ------------------------------------------------

    def _fresh(self, q: Qubit) -> JointState:
        if self.formalism is Formalism.KET:
            data = np.array([1, 0], dtype=complex)
        else:
            data = np.array([[1, 0], [0, 0]], dtype=complex)
        return JointState([q], data, self.formalism)

    def init_qubits(self, n: int, rate: float = 0.0, names: Sequence[str] = ()) -> list[Qubit]:
        if n < 1:
            raise ValueError("need at least one qubit")
        now = self.clock()
        out = []
        for i in range(n):
            q = Qubit(now, rate, names[i] if i < len(names) else "")
            self._fresh(q)
            out.append(q)
        return out

    def reset(self, q: Qubit) -> None:
        """Put an existing qubit back into a fresh |0> singleton."""
        if q.alive:
            self.discard(q)
        self._fresh(q)
        q.last_touched = self.clock()

    def merge(self, states: Sequence[JointState]) -> JointState:
        seen = set()
        for s in states:
            if id(s) in seen:
                raise ValueError("cannot merge a state with itself")
            seen.add(id(s))
        qubits: list[Qubit] = []
        data = np.array([1.0 + 0j]) if self.formalism is Formalism.KET else np.array([[1.0 + 0j]])
        for s in states:
            qubits.extend(s.qubits)
            data = np.kron(data, s.data)
        return JointState(qubits, data, self.formalism)

    def _joint(self, targets: Sequence[Qubit]) -> JointState:
        for q in targets:
            if not q.alive:
                raise ValueError(f"{q} is not alive")
        states: list[JointState] = []
        for q in targets:
            if all(q.state is not s for s in states):
                states.append(q.state)
        return states[0] if len(states) == 1 else self.merge(states)

    def prepare(self, qubits: Sequence[Qubit], rho: np.ndarray) -> None:
        """Overwrite ``qubits`` (discarding their old states) with ``rho``.

        In the ket formalism a pure state is sampled from the eigen-ensemble
        of ``rho``.
        """
        for q in qubits:
            if q.alive:
                self.discard(q)
        if self.formalism is Formalism.DM:
            data = np.array(rho, dtype=complex)
        else:
            vals, vecs = np.linalg.eigh(rho)
            vals = np.clip(vals.real, 0, None)
            idx = self.rng.choice(len(vals), p=vals / vals.sum())
            data = vecs[:, idx].astype(complex)
        JointState(list(qubits), data, self.formalism)
        now = self.clock()
        for q in qubits:
            q.last_touched = now

    # -- channels -----------------------------------------------------------

    def apply_gate(self, gate: GateSpec, targets: Sequence[Qubit]) -> None:
        if len(set(id(q) for q in targets)) != len(targets):
            raise ValueError(f"repeated qubit in targets {targets}")
        if gate.name == "INIT":
            for q in targets:
                self.reset(q)
            return
        if gate.name == "MEASURE":
            raise ValueError("use measure() for measurements")
        if gate.arity != len(targets):
            raise ValueError(f"{gate} acts on {gate.arity} qubit(s), got {len(targets)}")
        js = self._joint(targets)
        for q in targets:
            self.catch_up(q)
        self._unitary(js, gate.matrix, [js.axis(q) for q in targets])

    def _unitary(self, js: JointState, u: np.ndarray, axes: list[int]) -> None:
        t = _apply_op(js.tensor(), u, axes)
        if js.formalism is Formalism.DM:
            t = _apply_op(t, u.conj(), [js.n + a for a in axes])
        js.set_tensor(t)

    def apply_depolarizing(self, targets: Sequence[Qubit], p: float) -> None:
        """Joint depolarizing: (1-p) rho + p I/2^k (x) tr_targets rho.

        The ket backend unravels this as: with probability
        ``p (4^k - 1) / 4^k`` apply a uniformly drawn non-identity Pauli.
        """
        if not 0 <= p <= 1:
            raise ValueError(f"depolarizing probability must lie in [0, 1], got {p}")
        if p == 0:
            return
        js = self._joint(targets)
        axes = [js.axis(q) for q in targets]
        k = len(axes)
        if js.formalism is Formalism.DM:
            js.data = depolarize_dm(js.data, axes, p)
            return
        q_apply = p * (4**k - 1) / 4**k
        if self.rng.random() < q_apply:
            paulis = _pauli_strings(k)
            op = paulis[self.rng.integers(len(paulis))]
            js.set_tensor(_apply_op(js.tensor(), op, axes))

    def catch_up(self, q: Qubit) -> None:
        """Charge memory depolarizing for the time elapsed since last touch."""
        now = self.clock()
        dt = now - q.last_touched
        if dt < 0:
            raise ValueError(f"{q} was touched in the future")
        if q.rate > 0 and dt > 0:
            self.apply_depolarizing([q], memory_depolar_prob(q.rate, dt))
        q.last_touched = now

    # -- measurement / removal ------------------------------------------------

    def _choose(self, p1: float) -> int:
        if self.outcome_chooser is not None:
            return self.outcome_chooser(p1)
        return int(self.rng.random() < p1)

    def measure(self, q: Qubit, basis: str = "Z", flip_prob: float = 0.0) -> int:
        """Projective measurement with a classical readout flip.

        The readout flip does not change the quantum state. In the ket
        formalism the flip is drawn from the RNG. In the DM formalism the
        flip is averaged: the state is conditioned on the *reported* bit,
        i.e. ``(1-f) P_r rho P_r + f P_r' rho P_r'`` (normalised), which keeps
        the measured qubit classically correlated with the rest when
        ``0 < f < 1``.
        """
        if basis not in ("Z", "X"):
            raise ValueError(f"unsupported basis {basis!r}")
        if not 0 <= flip_prob <= 1:
            raise ValueError(f"flip probability must lie in [0, 1], got {flip_prob}")
        self.catch_up(q)
        js = q.state
        a = js.axis(q)
        h = _FIXED["H"]
        if basis == "X":
            self._unitary(js, h, [a])
        if js.formalism is Formalism.KET:
            bit = self._measure_ket(js, q, a)
            if flip_prob > 0 and self.rng.random() < flip_prob:
                bit ^= 1
        else:
            bit = self._measure_dm(js, q, a, flip_prob)
        if basis == "X":
            self._unitary(q.state, h, [q.state.axis(q)])
        return bit

    def _measure_ket(self, js: JointState, q: Qubit, a: int) -> int:
        t = js.tensor()
        p1 = float(np.sum(np.abs(np.take(t, 1, axis=a)) ** 2))
        bit = self._choose(min(max(p1, 0.0), 1.0))
        pb = p1 if bit else 1 - p1
        if pb <= 1e-15:
            raise BranchImpossible(f"outcome {bit} has probability {pb}")
        rest = np.take(t, bit, axis=a) / np.sqrt(pb)
        others = [x for x in js.qubits if x is not q]
        if others:
            JointState(others, rest.reshape(-1), js.formalism)
        single = np.zeros(2, dtype=complex)
        single[bit] = 1
        JointState([q], single, js.formalism)
        return bit

    def _measure_dm(self, js: JointState, q: Qubit, a: int, f: float) -> int:
        n = js.n
        t = js.tensor()
        idx0 = [slice(None)] * (2 * n)
        proj = []
        for b in (0, 1):
            keep = np.zeros_like(t)
            sl = list(idx0)
            sl[a] = b
            sl[n + a] = b
            keep[tuple(sl)] = t[tuple(sl)]
            proj.append(keep)
        p = [float(np.real(np.trace(x.reshape(2**n, 2**n)))) for x in proj]
        p1_reported = (1 - f) * p[1] + f * p[0]
        bit = self._choose(min(max(p1_reported, 0.0), 1.0))
        weights = (f, 1 - f) if bit else (1 - f, f)  # weight of true outcome 0, 1
        terms = [(b, w * proj[b]) for b, w in ((0, weights[0]), (1, weights[1]))]
        terms = [(b, x) for b, x in terms if np.real(np.trace(x.reshape(2**n, 2**n))) > 1e-15]
        if not terms:
            raise BranchImpossible(f"reported outcome {bit} has probability 0")
        total = sum(x for _, x in terms)
        norm = float(np.real(np.trace(total.reshape(2**n, 2**n))))
        if len(terms) == 1:
            # product state: factor q out
            b = terms[0][0]
            sl = list(idx0)
            sl[a] = b
            sl[n + a] = b
            others = [x for x in js.qubits if x is not q]
            if others:
                rest = total[tuple(sl)] / norm
                JointState(others, rest.reshape(2 ** (n - 1), 2 ** (n - 1)), js.formalism)
            single = np.zeros((2, 2), dtype=complex)
            single[b, b] = 1
            JointState([q], single, js.formalism)
        else:
            js.set_tensor(total / norm)
        return bit

    def discard(self, q: Qubit) -> None:
        """Trace ``q`` out (DM) or measure and drop it (ket)."""
        js = q.state
        if js is None:
            raise ValueError(f"{q} already discarded")
        if js.n > 1:
            if js.formalism is Formalism.KET:
                self._measure_ket(js, q, js.axis(q))
                js = q.state
            else:
                others = [x for x in js.qubits if x is not q]
                keep = [js.axis(x) for x in others]
                JointState(others, partial_trace(js.data, keep), js.formalism)
        q.state = None

    # -- scoring --------------------------------------------------------------

    def reduced_dm(self, targets: Sequence[Qubit]) -> np.ndarray:
        """Joint marginal of ``targets`` in the given order."""
        groups: list[JointState] = []
        for q in targets:
            if not q.alive:
                raise ValueError(f"{q} is not alive")
            if all(q.state is not s for s in groups):
                groups.append(q.state)
        rho = np.array([[1.0 + 0j]])
        order: list[Qubit] = []
        for s in groups:
            mine = [q for q in targets if q.state is s]
            rho = np.kron(rho, partial_trace(s.density_matrix(), [s.axis(q) for q in mine]))
            order.extend(mine)
        k = len(targets)
        perm = [order.index(q) for q in targets]
        t = rho.reshape((2,) * (2 * k))
        t = np.transpose(t, perm + [k + i for i in perm])
        return t.reshape(2**k, 2**k)

    def fidelity(self, targets: Sequence[Qubit], psi: np.ndarray) -> float:
        """Squared overlap <psi|rho|psi> of the targets' marginal with ``psi``.

        ``psi`` is normalised here, so amplitudes rounded to float (such as
        1/sqrt(2)) do not bias the result.
        """
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        if psi.shape[0] != 2 ** len(targets):
            raise ValueError(
                f"target state has dimension {psi.shape[0]}, "
                f"expected {2 ** len(targets)}"
            )
        rho = self.reduced_dm(targets)
        norm = float(np.real(psi.conj() @ psi))
        if norm == 0:
            raise ValueError("target state is the zero vector")
        return float(np.real(psi.conj() @ rho @ psi)) / norm
