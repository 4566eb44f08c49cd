import math

import numpy as np
import pytest

from conftest import dense_observable, random_unit_state
from qzo.circuits import CircuitTemplate, GateSlot, build_qcbm, build_random_layers
from qzo.errors import ConfigurationError
from qzo.problems import (
    NLL_CLIP,
    TargetDistribution,
    cardinality_target,
    energy_loss,
    ground_energy,
    heisenberg_2d,
    ising_1d,
    nll_loss,
    random_hamiltonian,
    random_target,
)
from qzo.simulator import Observable, StateVector, expectation, init_zero_state


def test_ising_terms():
    obs = ising_1d(3)
    zz = [t for t in obs.terms if len(t.factors) == 2]
    x = [t for t in obs.terms if len(t.factors) == 1]
    assert len(obs.terms) == 6
    assert all(t.coefficient == -1.0 and {a for _, a in t.factors} == {"Z"} for t in zz)
    assert all(t.coefficient == -0.5 and t.factors[0][1] == "X" for t in x)
    # periodic wraparound closes the chain
    assert {tuple(q for q, _ in t.factors) for t in zz} == {(0, 1), (1, 2), (0, 2)}


def test_ising_zero_state_energy():
    assert expectation(init_zero_state(3), ising_1d(3)) == pytest.approx(-3.0, abs=1e-15)


def test_ising_ground_energy_matches_dense():
    e0 = np.linalg.eigvalsh(dense_observable(ising_1d(3)))[0]
    assert ground_energy(ising_1d(3)) == pytest.approx(e0, abs=1e-12)
    assert e0 == pytest.approx(-3.2320508075688772, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_ising_expectation_matches_dense(n, rng):
    obs = ising_1d(n)
    H = dense_observable(obs)
    for _ in range(10):
        psi = random_unit_state(rng, n)
        assert abs(expectation(StateVector(n, psi), obs) - np.vdot(psi, H @ psi).real) < 1e-10


def test_heisenberg_counts():
    obs = heisenberg_2d(3)
    assert obs.n_qubits == 9
    assert len(obs.terms) == 63
    assert sum(len(t.factors) == 2 for t in obs.terms) == 54
    assert all(t.coefficient == -0.25 and t.factors[0][1] == "Z" for t in obs.terms if len(t.factors) == 1)
    assert all(t.coefficient == -0.5 for t in obs.terms if len(t.factors) == 2)


def test_heisenberg_site_mapping():
    obs = heisenberg_2d(3)
    pairs = {tuple(q for q, _ in t.factors) for t in obs.terms if len(t.factors) == 2}
    # right neighbour of (0,0) is qubit 1, down neighbour is qubit 3, wrap (0,2)->(0,0)
    assert {(0, 1), (0, 3), (0, 2), (0, 6)} <= pairs


def test_heisenberg_side2_matches_dense(rng):
    obs = heisenberg_2d(2)
    assert len(obs.terms) == 2 * 3 * 4 + 4
    H = dense_observable(obs)
    for _ in range(10):
        psi = random_unit_state(rng, 4)
        assert abs(expectation(StateVector(4, psi), obs) - np.vdot(psi, H @ psi).real) < 1e-10


def test_heisenberg_ground_energy_matches_dense():
    obs = heisenberg_2d(3)
    e0 = np.linalg.eigvalsh(dense_observable(obs))[0]
    assert ground_energy(obs) == pytest.approx(e0, abs=1e-8)


def test_random_hamiltonian_shape():
    obs = random_hamiltonian(123, 10, 10, 20)
    assert obs.n_qubits == 10
    assert len(obs.terms) == 30
    assert sum(len(t.factors) == 2 for t in obs.terms) == 20
    assert random_hamiltonian(123, 10, 10, 20) == obs
    assert random_hamiltonian(124, 10, 10, 20) != obs


def test_random_hamiltonian_coefficient_stats():
    obs = random_hamiltonian(99, 10, 5000, 5000)
    c = np.array([t.coefficient for t in obs.terms])
    assert c.size == 10_000
    assert abs(c.mean()) < 0.1
    assert abs(c.std() - math.pi) < 0.1 * math.pi


def test_random_hamiltonian_pairs_distinct():
    obs = random_hamiltonian(5, 3, 0, 200)
    for t in obs.terms:
        assert t.factors[0][0] != t.factors[1][0]


def test_cardinality_target():
    tgt = cardinality_target(10, 5)
    support = tgt.probs > 0
    assert support.sum() == 252
    assert np.allclose(tgt.probs[support], 1 / 252)
    assert np.allclose(cardinality_target(2, 1).probs, [0, 0.5, 0.5, 0])
    assert abs(tgt.probs.sum() - 1) < 1e-12
    with pytest.raises(ConfigurationError):
        cardinality_target(3, 4)


def test_random_target():
    tgt = random_target(4, 5)
    assert tgt.probs.shape == (32,)
    assert tgt.probs.min() > 0
    assert abs(tgt.probs.sum() - 1) < 1e-12
    assert np.array_equal(random_target(4, 5).probs, tgt.probs)


def test_energy_loss_zero_params():
    t = build_random_layers(1, 3, 30, 10)
    loss = energy_loss(t, ising_1d(3))
    assert loss(np.zeros(30)) == pytest.approx(-3.0, abs=1e-12)


def test_energy_loss_bounded_by_ground_energy(rng):
    t = build_random_layers(2, 3, 30, 10)
    obs = ising_1d(3)
    loss = energy_loss(t, obs)
    e0 = np.linalg.eigvalsh(dense_observable(obs))[0]
    for _ in range(50):
        theta = rng.normal(0, np.pi, 30)
        value = loss(theta)
        assert value >= e0 - 1e-9
        assert loss(theta) == value


def test_energy_loss_mismatch():
    with pytest.raises(ConfigurationError):
        energy_loss(build_random_layers(0, 3, 5, 1), ising_1d(4))


def test_nll_equals_entropy_when_distributions_match():
    t = CircuitTemplate(1, (GateSlot("RY", 0, None, 0),))
    tgt = TargetDistribution(1, np.array([0.5, 0.5]))
    assert nll_loss(t, tgt)([np.pi / 2]) == pytest.approx(math.log(2), abs=1e-12)


def test_nll_clamps_zero_model_probability():
    t = CircuitTemplate(1, (GateSlot("RY", 0, None, 0),))
    tgt = cardinality_target(1, 1)  # all mass on |1>
    assert nll_loss(t, tgt)([0.0]) == pytest.approx(-math.log(NLL_CLIP), rel=1e-12)


def test_nll_gibbs_bound(rng):
    tgt = random_target(3, 5)
    t = build_random_layers(7, 5, 40, 10)
    loss = nll_loss(t, tgt)
    for _ in range(50):
        assert loss(rng.normal(0, np.pi, 40)) >= tgt.entropy() - 1e-9


def test_nll_mismatch():
    with pytest.raises(ConfigurationError):
        nll_loss(build_qcbm(3, 1), cardinality_target(4, 2))


def test_observable_builders_are_json_stable():
    obs = random_hamiltonian(1, 4, 3, 3)
    assert Observable.from_json(obs.to_json()) == obs
