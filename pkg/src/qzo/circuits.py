"""Parameterized circuit templates: seeded random layers and the QCBM ansatz."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .simulator import Gate, StateVector, _apply_cnot_inplace, _apply_rotation_inplace, init_zero_state

ROTATIONS = ("RX", "RY", "RZ")


@dataclass(frozen=True)
class GateSlot:
    kind: str
    target: int
    control: int | None = None
    param_index: int | None = None

    def __post_init__(self):
        if self.kind == "CNOT":
            if self.param_index is not None or self.control is None:
                raise ConfigurationError("CNOT slots carry a control and no parameter")
        elif self.kind in ROTATIONS:
            if self.param_index is None or self.control is not None:
                raise ConfigurationError(f"{self.kind} slots carry a parameter and no control")
        else:
            raise ConfigurationError(f"unknown slot kind {self.kind!r}")


@dataclass(frozen=True)
class CircuitTemplate:
    n_qubits: int
    slots: tuple[GateSlot, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        indices = sorted(s.param_index for s in self.slots if s.param_index is not None)
        if indices != list(range(len(indices))):
            raise ConfigurationError("parameter indices must be 0..n_params-1, each used once")
        for s in self.slots:
            for q in (s.target, s.control):
                if q is not None and not 0 <= q < self.n_qubits:
                    raise ConfigurationError(f"slot {s} acts outside {self.n_qubits} qubits")

    @property
    def n_params(self) -> int:
        return sum(1 for s in self.slots if s.param_index is not None)

    @property
    def n_cnots(self) -> int:
        return sum(1 for s in self.slots if s.kind == "CNOT")

    def gates(self, params) -> list[Gate]:
        params = self._check_params(params)
        return [
            Gate(s.kind, s.target, s.control)
            if s.kind == "CNOT"
            else Gate(s.kind, s.target, angle=float(params[s.param_index]))
            for s in self.slots
        ]

    def _check_params(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ConfigurationError(
                f"template takes {self.n_params} parameters, got shape {params.shape}"
            )
        return params

    def to_json(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "slots": [
                {"kind": s.kind, "target": s.target, "control": s.control, "param_index": s.param_index}
                for s in self.slots
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CircuitTemplate":
        slots = tuple(
            GateSlot(s["kind"], s["target"], s.get("control"), s.get("param_index")) for s in doc["slots"]
        )
        return cls(int(doc["n_qubits"]), slots)

    def digest(self) -> str:
        return content_hash(self.to_json())


def content_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_random_layers(seed: int, n_qubits: int, n_rotations: int, n_cnots: int) -> CircuitTemplate:
    """Random rotations (axis and qubit uniform) interleaved with random CNOTs.

    Gates are grouped into ``min(n_rotations, n_cnots)`` blocks, each holding
    ``n_rotations // blocks`` rotations followed by ``n_cnots // blocks`` CNOTs;
    leftovers of either kind go into the last block.
    """
    if n_qubits < 1 or n_rotations < 0 or n_cnots < 0:
        raise ConfigurationError("sizes must be non-negative and n_qubits >= 1")
    if n_cnots > 0 and n_qubits < 2:
        raise ConfigurationError("CNOT placement needs at least 2 qubits")
    rng = np.random.default_rng(seed)
    n_blocks = max(1, min(n_rotations, n_cnots))
    rot_per, cnot_per = n_rotations // n_blocks, n_cnots // n_blocks
    slots: list[GateSlot] = []
    param = 0
    for b in range(n_blocks):
        last = b == n_blocks - 1
        n_rot = rot_per + (n_rotations - rot_per * n_blocks if last else 0)
        n_cx = cnot_per + (n_cnots - cnot_per * n_blocks if last else 0)
        for _ in range(n_rot):
            axis = int(rng.integers(3))
            target = int(rng.integers(n_qubits))
            slots.append(GateSlot(ROTATIONS[axis], target, None, param))
            param += 1
        for _ in range(n_cx):
            control, target = (int(q) for q in rng.choice(n_qubits, size=2, replace=False))
            slots.append(GateSlot("CNOT", target, control))
    return CircuitTemplate(n_qubits, tuple(slots))


def build_qcbm(n_qubits: int, n_layers: int) -> CircuitTemplate:
    """Layers of RX then RZ on every qubit, each followed by a CNOT ring q -> q+1 mod n."""
    if n_qubits < 2 or n_layers < 1:
        raise ConfigurationError("QCBM needs n_qubits >= 2 and n_layers >= 1")
    slots: list[GateSlot] = []
    param = 0
    for _ in range(n_layers):
        for kind in ("RX", "RZ"):
            for q in range(n_qubits):
                slots.append(GateSlot(kind, q, None, param))
                param += 1
        for q in range(n_qubits):
            slots.append(GateSlot("CNOT", (q + 1) % n_qubits, q))
    return CircuitTemplate(n_qubits, tuple(slots))


def evaluate(template: CircuitTemplate, params) -> StateVector:
    """Apply the template to ``|0...0>`` with ``params`` bound by slot index."""
    params = template._check_params(params)
    n = template.n_qubits
    psi = init_zero_state(n).amplitudes.copy()
    for s in template.slots:
        if s.control is not None:
            _apply_cnot_inplace(psi, n, s.control, s.target)
        else:
            _apply_rotation_inplace(psi, n, s.kind[1], s.target, params[s.param_index])
    return StateVector(n, psi)
