"""Benchmark objectives: Hamiltonian energies and generative NLL losses."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .circuits import CircuitTemplate, content_hash, evaluate
from .errors import ConfigurationError
from .simulator import AXES, Observable, PauliTerm, expectation, probabilities

NLL_CLIP = 1e-12
COEFF_STD = math.pi


@dataclass(frozen=True, eq=False)
class TargetDistribution:
    n_bits: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != (2**self.n_bits,):
            raise ConfigurationError(f"need {2**self.n_bits} probabilities, got shape {probs.shape}")
        if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigurationError("target must be non-negative and sum to 1")
        object.__setattr__(self, "probs", probs)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())

    def to_json(self) -> dict:
        return {"n_bits": self.n_bits, "probs": self.probs.tolist()}


@dataclass(frozen=True, eq=False)
class LossFunction:
    """Deterministic scalar loss over ``n_params`` circuit parameters."""

    n_params: int
    evaluator: Callable[[np.ndarray], float]
    template: CircuitTemplate | None = None

    def __call__(self, params) -> float:
        return self.evaluator(np.asarray(params, dtype=np.float64))


def ising_1d(n_qubits: int) -> Observable:
    """-sum Z_i Z_{i+1} - 1/2 sum X_i with periodic wraparound."""
    if n_qubits < 2:
        raise ConfigurationError("Ising chain needs at least 2 qubits")
    zz = [PauliTerm(-1.0, ((i, "Z"), ((i + 1) % n_qubits, "Z"))) for i in range(n_qubits)]
    x = [PauliTerm(-0.5, ((i, "X"),)) for i in range(n_qubits)]
    return Observable(n_qubits, tuple(zz + x))


def heisenberg_2d(side: int) -> Observable:
    """Periodic side x side Heisenberg lattice with a -1/4 Z field.

    Site (i, j), zero-based, lives on qubit ``side * i + j``.
    """
    if side < 2:
        raise ConfigurationError("Heisenberg lattice needs side >= 2")

    def site(i, j):
        return side * (i % side) + (j % side)

    couplings, field = [], []
    for i in range(side):
        for j in range(side):
            for axis in AXES:
                couplings.append(PauliTerm(-0.5, ((site(i, j), axis), (site(i + 1, j), axis))))
                couplings.append(PauliTerm(-0.5, ((site(i, j), axis), (site(i, j + 1), axis))))
            field.append(PauliTerm(-0.25, ((site(i, j), "Z"),)))
    return Observable(side * side, tuple(couplings + field))


def random_hamiltonian(seed: int, n_qubits: int, n_single: int, n_pair: int) -> Observable:
    """Gaussian-weighted random Pauli terms (std pi) on uniformly chosen qubits."""
    if n_qubits < 2:
        raise ConfigurationError("random Hamiltonian needs at least 2 qubits")
    rng = np.random.default_rng(seed)
    pairs = list(combinations(range(n_qubits), 2))
    terms = []
    for _ in range(n_pair):
        a, b = pairs[int(rng.integers(len(pairs)))]
        ax_a, ax_b = (AXES[int(k)] for k in rng.integers(3, size=2))
        terms.append(PauliTerm(rng.normal(0.0, COEFF_STD), ((a, ax_a), (b, ax_b))))
    for _ in range(n_single):
        q = int(rng.integers(n_qubits))
        axis = AXES[int(rng.integers(3))]
        terms.append(PauliTerm(rng.normal(0.0, COEFF_STD), ((q, axis),)))
    return Observable(n_qubits, tuple(terms))


def cardinality_target(n_bits: int, k: int) -> TargetDistribution:
    if not 0 <= k <= n_bits:
        raise ConfigurationError(f"cardinality {k} outside [0, {n_bits}]")
    weights = np.bitwise_count(np.arange(2**n_bits, dtype=np.int64))
    probs = np.where(weights == k, 1.0 / math.comb(n_bits, k), 0.0)
    return TargetDistribution(n_bits, probs)


def random_target(seed: int, n_bits: int) -> TargetDistribution:
    if n_bits < 1:
        raise ConfigurationError("random target needs n_bits >= 1")
    rng = np.random.default_rng(seed)
    x = np.abs(rng.normal(0.0, COEFF_STD, size=2**n_bits))
    probs = x / x.sum()
    # renormalise once more so the sum is 1 to the last ulp or two
    return TargetDistribution(n_bits, probs / probs.sum())


def energy_loss(template: CircuitTemplate, obs: Observable) -> LossFunction:
    if template.n_qubits != obs.n_qubits:
        raise ConfigurationError(
            f"circuit has {template.n_qubits} qubits, observable {obs.n_qubits}"
        )
    obs.sparse_matrix  # build once up front so concurrent callers share it

    def evaluator(params):
        return expectation(evaluate(template, params), obs)

    return LossFunction(template.n_params, evaluator, template)


def cross_entropy(target: np.ndarray, model: np.ndarray) -> float:
    return float(-(target * np.log(np.maximum(model, NLL_CLIP))).sum())


def nll_loss(template: CircuitTemplate, target: TargetDistribution) -> LossFunction:
    """Cross-entropy of the circuit's Born distribution against ``target``."""
    if template.n_qubits != target.n_bits:
        raise ConfigurationError(
            f"circuit has {template.n_qubits} qubits, target {target.n_bits} bits"
        )

    def evaluator(params):
        return cross_entropy(target.probs, probabilities(evaluate(template, params)))

    return LossFunction(template.n_params, evaluator, template)


def ground_energy(obs: Observable) -> float:
    mat = obs.sparse_matrix
    if mat.shape[0] <= 64:
        return float(np.linalg.eigvalsh(mat.toarray())[0])
    return float(spla.eigsh(mat, k=1, which="SA", return_eigenvectors=False)[0])


def observable_hash(obs: Observable) -> str:
    return content_hash(obs.to_json())


def target_hash(target: TargetDistribution) -> str:
    return content_hash(target.to_json())
