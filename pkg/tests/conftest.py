"""Dense-matrix oracles, built independently of the simulator's bit tricks."""

import re
from functools import reduce

import numpy as np
import pytest

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_all(mats):
    return reduce(np.kron, mats)


def dense_pauli(n, factors):
    """Kronecker product with qubit 0 as the leftmost (most significant) factor."""
    ops = ["I"] * n
    for q, a in factors:
        ops[q] = a
    return kron_all([PAULI[o] for o in ops])


def dense_observable(obs):
    dim = 2**obs.n_qubits
    H = np.zeros((dim, dim), dtype=complex)
    for t in obs.terms:
        H += t.coefficient * dense_pauli(obs.n_qubits, t.factors)
    return H


def dense_gate(n, gate):
    from scipy.linalg import expm

    if gate.kind == "CNOT":
        P0 = np.diag([1, 0]).astype(complex)
        P1 = np.diag([0, 1]).astype(complex)
        mats_a = [P0 if q == gate.control else PAULI["I"] for q in range(n)]
        mats_b = [P1 if q == gate.control else (PAULI["X"] if q == gate.target else PAULI["I"]) for q in range(n)]
        return kron_all(mats_a) + kron_all(mats_b)
    axis = gate.kind[1]
    single = expm(-0.5j * gate.angle * PAULI[axis])
    return kron_all([single if q == gate.target else PAULI["I"] for q in range(n)])


def random_unit_state(rng, n):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


class ScriptedRng:
    """Stands in for ``np.random.Generator`` with pre-chosen draws.

    ``signs`` feeds Rademacher draws (as +-1 vectors), ``normals`` feeds
    ``standard_normal`` calls, each consumed in order.
    """

    def __init__(self, signs=(), normals=()):
        self.signs = [np.asarray(s, dtype=float) for s in signs]
        self.normals = [np.asarray(z, dtype=float) for z in normals]

    def integers(self, low, high, size):
        s = self.signs.pop(0)
        assert s.shape == (size,)
        return ((s + 1) / 2).astype(np.int64)

    def standard_normal(self, size):
        z = self.normals.pop(0)
        assert z.shape == (size,)
        return z


def pytest_terminal_summary(terminalreporter):
    """One verdict line per acceptance criterion, in criterion order."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_c(\d+)_", rep.nodeid)
            if rep.when != "call" or not m:
                continue
            n = int(m.group(1))
            detail = dict(rep.user_properties).get("detail")
            if detail is None:
                detail = f"{rep.nodeid.split('::')[-1]} errored: {rep.longrepr.reprcrash.message}"
            verdict = "PASS" if outcome == "passed" else "FAIL"
            lines.append((n, f"[{verdict}] criterion {n:>2}: {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
