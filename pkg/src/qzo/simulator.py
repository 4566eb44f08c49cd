"""Dense statevector simulation for small qubit registers.

Conventions:
  * qubit 0 is the most significant bit of a basis-state index, so on two
    qubits ``|10>`` is index 2;
  * rotations are ``R_A(phi) = exp(-i phi A / 2)`` for ``A`` in X, Y, Z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

MAX_QUBITS = 12
AXES = ("X", "Y", "Z")
GATE_KINDS = ("RX", "RY", "RZ", "CNOT")
IMAG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (2**self.n_qubits,):
            raise ConfigurationError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int | None = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigurationError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None or self.control == self.target:
                raise ConfigurationError("CNOT needs a control distinct from its target")
        elif self.control is not None:
            raise ConfigurationError(f"{self.kind} takes no control qubit")


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    factors: tuple[tuple[int, str], ...]

    def __post_init__(self):
        factors = tuple(sorted((int(q), str(a)) for q, a in self.factors))
        qubits = [q for q, _ in factors]
        if not factors:
            raise ConfigurationError("a Pauli term needs at least one factor")
        if len(set(qubits)) != len(qubits):
            raise ConfigurationError(f"repeated qubit in Pauli term {factors}")
        for q, a in factors:
            if a not in AXES or q < 0:
                raise ConfigurationError(f"bad Pauli factor ({q}, {a!r})")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "coefficient", float(self.coefficient))


@dataclass(frozen=True)
class Observable:
    """Real-weighted sum of Pauli strings on ``n_qubits`` qubits."""

    n_qubits: int
    terms: tuple[PauliTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple(self.terms)
        for term in terms:
            for q, _ in term.factors:
                if q >= self.n_qubits:
                    raise ConfigurationError(
                        f"term acts on qubit {q} but observable has {self.n_qubits} qubits"
                    )
        object.__setattr__(self, "terms", terms)

    @cached_property
    def sparse_matrix(self) -> sp.csr_matrix:
        """Sum of all terms as a sparse ``2^n x 2^n`` matrix.

        Built from bit masks: a Pauli string maps ``|b>`` to
        ``phase(b) |b ^ xmask>`` where X and Y flip bits and Y, Z add signs.
        """
        n = self.n_qubits
        dim = 2**n
        idx = np.arange(dim, dtype=np.int64)
        rows, cols, vals = [], [], []
        for term in self.terms:
            xmask = zmask = 0
            n_y = 0
            for q, axis in term.factors:
                bit = 1 << (n - 1 - q)
                if axis in ("X", "Y"):
                    xmask |= bit
                if axis in ("Y", "Z"):
                    zmask |= bit
                if axis == "Y":
                    n_y += 1
            parity = np.bitwise_count(idx & zmask).astype(np.int64) & 1
            phase = (1j**n_y) * (1.0 - 2.0 * parity)
            rows.append(idx ^ xmask)
            cols.append(idx)
            vals.append(term.coefficient * phase)
        if not self.terms:
            return sp.csr_matrix((dim, dim), dtype=np.complex128)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim),
        )
        return mat.tocsr()

    def to_json(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "terms": [
                {"coefficient": t.coefficient, "factors": [[q, a] for q, a in t.factors]}
                for t in self.terms
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Observable":
        terms = tuple(
            PauliTerm(t["coefficient"], tuple((q, a) for q, a in t["factors"])) for t in doc["terms"]
        )
        return cls(int(doc["n_qubits"]), terms)


def _check_n_qubits(n_qubits: int):
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must lie in [1, {MAX_QUBITS}], got {n_qubits}")


def init_zero_state(n_qubits: int) -> StateVector:
    _check_n_qubits(n_qubits)
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    c = np.cos(angle / 2)
    s = np.sin(angle / 2)
    if axis == "X":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis == "Y":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if axis == "Z":
        return np.array([[c - 1j * s, 0], [0, c + 1j * s]])
    raise ConfigurationError(f"unknown rotation axis {axis!r}")


def _apply_rotation_inplace(psi: np.ndarray, n: int, axis: str, target: int, angle: float):
    # view as (high, 2, low) with the target bit in the middle
    view = psi.reshape(2**target, 2, 2 ** (n - 1 - target))
    c = np.cos(angle / 2)
    s = np.sin(angle / 2)
    if axis == "Z":
        view[:, 0, :] *= c - 1j * s
        view[:, 1, :] *= c + 1j * s
        return
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    if axis == "X":
        view[:, 0, :] = c * a0 - 1j * s * a1
        view[:, 1, :] = c * a1 - 1j * s * a0
    else:
        view[:, 0, :] = c * a0 - s * a1
        view[:, 1, :] = c * a1 + s * a0


def _apply_cnot_inplace(psi: np.ndarray, n: int, control: int, target: int):
    shape = [2] * n
    view = psi.reshape(shape)
    sel = [slice(None)] * n
    sel[control] = 1
    sub = view[tuple(sel)]
    # target axis index shifts down by one if it sat after the control axis
    t_axis = target if target < control else target - 1
    flipped = np.flip(sub, axis=t_axis).copy()
    sub[...] = flipped


def _check_gate(gate: Gate, n: int):
    qubits = [gate.target] + ([gate.control] if gate.control is not None else [])
    for q in qubits:
        if not 0 <= q < n:
            raise ConfigurationError(f"qubit index {q} out of range for {n} qubits")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Return a new state with ``gate`` applied; the input is left untouched."""
    n = state.n_qubits
    _check_gate(gate, n)
    psi = state.amplitudes.copy()
    apply_gate_inplace(psi, n, gate)
    return StateVector(n, psi)


def apply_gate_inplace(psi: np.ndarray, n: int, gate: Gate):
    if gate.kind == "CNOT":
        _apply_cnot_inplace(psi, n, gate.control, gate.target)
    else:
        _apply_rotation_inplace(psi, n, gate.kind[1], gate.target, gate.angle)


def run_gates(n_qubits: int, gates: Iterable[Gate]) -> StateVector:
    psi = init_zero_state(n_qubits).amplitudes.copy()
    for gate in gates:
        _check_gate(gate, n_qubits)
        apply_gate_inplace(psi, n_qubits, gate)
    return StateVector(n_qubits, psi)


def expectation(state: StateVector, obs: Observable) -> float:
    if state.n_qubits != obs.n_qubits:
        raise ConfigurationError(
            f"state has {state.n_qubits} qubits, observable has {obs.n_qubits}"
        )
    psi = state.amplitudes
    value = np.vdot(psi, obs.sparse_matrix @ psi)
    if abs(value.imag) > IMAG_TOL:
        raise ArithmeticError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def fidelity(a: StateVector, b: StateVector) -> float:
    if a.n_qubits != b.n_qubits:
        raise ConfigurationError(f"fidelity between {a.n_qubits}- and {b.n_qubits}-qubit states")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def probabilities(state: StateVector) -> np.ndarray:
    amps = state.amplitudes
    return amps.real**2 + amps.imag**2


def basis_state(n_qubits: int, bits: Sequence[int]) -> StateVector:
    """Computational basis state, ``bits[0]`` being qubit 0."""
    _check_n_qubits(n_qubits)
    index = int("".join(str(int(b)) for b in bits), 2)
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(n_qubits, amps)
