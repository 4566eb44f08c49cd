"""Zeroth-order optimizers behind one ``step(state, hp, loss, rng)`` interface.

Every stepper is a pure function of its inputs plus the generator it is
handed: it returns a fresh :class:`OptimizerState` and never mutates the
one it received.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg

from .circuits import CircuitTemplate, evaluate
from .errors import ConfigurationError
from .simulator import fidelity as state_fidelity

ALGORITHMS = ("SPSA", "AdamSPSA", "2-SPSA", "QNSPSA", "GES", "xNES", "sNES")

_SPSA_DEFAULTS = {"eps0": 0.1, "gamma": 0.101, "eta0": 0.1, "c": 0.0, "alpha": 0.602}

# ``None`` marks a value derived from the problem dimension at init time.
DEFAULTS: dict[str, dict[str, float | None]] = {
    "SPSA": dict(_SPSA_DEFAULTS),
    "AdamSPSA": {**_SPSA_DEFAULTS, "eta0": 0.05, "beta0": 0.9, "lam": 0.0, "beta2": 0.999, "delta": 1e-8},
    "2-SPSA": {"eps0": 0.1, "gamma": 0.101, "eta": 0.1, "b_tol": 0.0, "lambda_floor": 1e-3},
    "QNSPSA": {"eps0": 0.1, "gamma": 0.101, "eta": 0.1, "b_tol": 0.0, "lambda_floor": 1e-3},
    "GES": {"sigma": 0.1, "k": 10, "alpha_mix": 0.5, "beta_scale": 2.0, "eta": 1.0},
    "xNES": {"eta_mu": 1.0, "eta_sigma": None, "eta_B": None, "sigma_init": 0.1},
    "sNES": {"eta_mu": 1.0, "eta_sigma": None, "sigma_init": 0.1},
}

_STEP_SIZES = {"eps0", "eta0", "eta", "sigma", "eta_mu", "eta_sigma", "eta_B", "sigma_init", "delta", "lambda_floor"}
_EXPONENTS = {"gamma", "alpha", "lam"}


@dataclass(frozen=True)
class HyperParams:
    """Named hyperparameters of one algorithm; unknown names are rejected."""

    algorithm: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown optimizer {self.algorithm!r}; expected one of {ALGORITHMS}")
        known = DEFAULTS[self.algorithm]
        unknown = set(self.values) - set(known)
        if unknown:
            raise ConfigurationError(f"{self.algorithm} has no hyperparameters {sorted(unknown)}")
        merged = {**known, **self.values}
        for name, value in merged.items():
            if value is None:
                continue
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite, got {value}")
            if name in _STEP_SIZES and value <= 0:
                raise ConfigurationError(f"{name} must be > 0, got {value}")
            if name in _EXPONENTS and value < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {value}")
        if "alpha_mix" in merged and not 0 <= merged["alpha_mix"] <= 1:
            raise ConfigurationError("alpha_mix must lie in [0, 1]")
        if "k" in merged and (merged["k"] < 1 or int(merged["k"]) != merged["k"]):
            raise ConfigurationError("k must be a positive integer")
        object.__setattr__(self, "values", merged)

    def __getitem__(self, name):
        return self.values[name]

    def to_json(self) -> dict:
        return {"algorithm": self.algorithm, "hyperparams": dict(self.values)}

    @classmethod
    def from_json(cls, doc: dict) -> "HyperParams":
        return cls(doc["algorithm"], dict(doc.get("hyperparams", {})))


class LossOracle:
    """Counts every evaluation of the wrapped loss."""

    def __init__(self, fn: Callable[[np.ndarray], float]):
        self._fn = fn
        self.query_count = 0

    def __call__(self, params) -> float:
        self.query_count += 1
        return float(self._fn(params))

    evaluate = __call__


class FidelityOracle:
    """``F(a, b) = |<psi(a)|psi(b)>|^2`` for a fixed circuit template."""

    def __init__(self, template: CircuitTemplate):
        self.template = template
        self.query_count = 0
        self._cached_key = None
        self._cached_state = None

    def _state(self, params):
        params = np.asarray(params, dtype=np.float64)
        key = params.tobytes()
        if key != self._cached_key:
            self._cached_key, self._cached_state = key, evaluate(self.template, params)
        return self._cached_state

    def __call__(self, a, b) -> float:
        self.query_count += 1
        return state_fidelity(self._state(a), evaluate(self.template, b))

    evaluate = __call__


@dataclass(frozen=True, eq=False)
class OptimizerState:
    algorithm: str
    theta: np.ndarray
    i: int = 1
    # AdamSPSA moments
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    # 2-SPSA / QNSPSA running Hessian and the loss at theta, if known
    hessian: np.ndarray | None = None
    last_loss: float | None = None
    blocked: bool = False
    # GES gradient buffer, newest last
    buffer: tuple[np.ndarray, ...] = ()
    # xNES (scalar sigma, matrix B) / sNES (vector sigma)
    sigma: float | np.ndarray | None = None
    B: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


def nes_default_rate(d: int) -> float:
    return (9 + 3 * math.log(d)) / (5 * d * math.sqrt(d))


def resolve(hp: HyperParams, d: int) -> dict:
    """Hyperparameter values with dimension-dependent defaults filled in."""
    values = dict(hp.values)
    for name in ("eta_sigma", "eta_B"):
        if name in values and values[name] is None:
            values[name] = nes_default_rate(d)
    return values


def init_state(hp: HyperParams, theta, initial_loss: float | None = None) -> OptimizerState:
    theta = np.array(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size == 0:
        raise ConfigurationError("theta must be a non-empty vector")
    d = theta.size
    algo = hp.algorithm
    if algo in ("2-SPSA", "QNSPSA"):
        return OptimizerState(algo, theta, hessian=np.eye(d), last_loss=initial_loss)
    if algo == "xNES":
        return OptimizerState(algo, theta, sigma=float(hp["sigma_init"]), B=np.eye(d))
    if algo == "sNES":
        return OptimizerState(algo, theta, sigma=np.full(d, float(hp["sigma_init"])))
    return OptimizerState(algo, theta)


def rademacher(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.integers(0, 2, size=d).astype(np.float64) * 2.0 - 1.0


def _check(state: OptimizerState, *algorithms: str):
    if state.algorithm not in algorithms:
        raise ConfigurationError(f"stepper for {algorithms} got a {state.algorithm} state")


def _spsa_schedule(hp: dict, i: int) -> tuple[float, float]:
    eps = hp["eps0"] / i ** hp["gamma"]
    eta = hp["eta0"] / (hp["c"] + i) ** hp["alpha"]
    return eps, eta


def spsa_step(state: OptimizerState, hp: HyperParams, loss: LossOracle, rng: np.random.Generator) -> OptimizerState:
    _check(state, "SPSA")
    eps, eta = _spsa_schedule(hp.values, state.i)
    delta = rademacher(rng, state.dim)
    g = (loss(state.theta + eps * delta) - loss(state.theta - eps * delta)) / (2 * eps)
    return replace(state, theta=state.theta - eta * g * delta, i=state.i + 1)


def adam_spsa_step(state: OptimizerState, hp: HyperParams, loss: LossOracle, rng: np.random.Generator) -> OptimizerState:
    _check(state, "AdamSPSA")
    i = state.i
    eps, eta = _spsa_schedule(hp.values, i)
    delta = rademacher(rng, state.dim)
    g = (loss(state.theta + eps * delta) - loss(state.theta - eps * delta)) / (2 * eps) * delta
    if state.m is None:
        m, v = g, g**2
    else:
        beta = hp["beta0"] / i ** hp["lam"]
        m = beta * state.m + (1 - beta) * g
        v = hp["beta2"] * state.v + (1 - hp["beta2"]) * g**2
    theta = state.theta - eta * m / (np.sqrt(v) + hp["delta"])
    return replace(state, theta=theta, i=i + 1, m=m, v=v)


def regularize(H: np.ndarray, lambda_floor: float) -> np.ndarray:
    """Symmetric positive-definite surrogate: eigenvalues -> max(|lam|, floor)."""
    H = np.asarray(H, dtype=np.float64)
    if not np.allclose(H, H.T, rtol=0.0, atol=1e-10):
        raise ValueError("regularize expects a symmetric matrix")
    w, V = np.linalg.eigh((H + H.T) / 2)
    w = np.maximum(np.abs(w), lambda_floor)
    out = (V * w) @ V.T
    return (out + out.T) / 2


def newton_candidate(theta, hessian, grad, eta: float, lambda_floor: float) -> np.ndarray:
    return theta - eta * np.linalg.solve(regularize(hessian, lambda_floor), grad)


def _second_order_step(state, hp, loss, rng, metric_sample):
    """Shared 2-SPSA / QNSPSA machinery; ``metric_sample`` returns the scalar
    that multiplies the symmetrised outer product of the two perturbations."""
    i, theta, d = state.i, state.theta, state.dim
    eps = hp["eps0"] / i ** hp["gamma"]
    delta = rademacher(rng, d)
    delta2 = rademacher(rng, d)
    f_plus = loss(theta + eps * delta)
    f_minus = loss(theta - eps * delta)
    grad = (f_plus - f_minus) / (2 * eps) * delta

    scale = metric_sample(theta, eps, delta, delta2, f_plus, f_minus)
    outer = np.outer(delta, delta2)
    h_hat = scale * (outer + outer.T) / 2
    hessian = (i / (i + 1)) * state.hessian + (1 / (i + 1)) * h_hat

    f_now = state.last_loss if state.last_loss is not None else loss(theta)
    candidate = newton_candidate(theta, hessian, grad, hp["eta"], hp["lambda_floor"])
    f_cand = loss(candidate)
    if f_cand > f_now + hp["b_tol"]:
        return replace(state, i=i + 1, hessian=hessian, last_loss=f_now, blocked=True)
    return replace(state, theta=candidate, i=i + 1, hessian=hessian, last_loss=f_cand, blocked=False)


def two_spsa_step(state: OptimizerState, hp: HyperParams, loss: LossOracle, rng: np.random.Generator) -> OptimizerState:
    _check(state, "2-SPSA")

    def loss_curvature(theta, eps, delta, delta2, f_plus, f_minus):
        df = (
            loss(theta + eps * delta + eps * delta2)
            - f_plus
            - loss(theta - eps * delta + eps * delta2)
            + f_minus
        )
        return df / (2 * eps**2)

    return _second_order_step(state, hp, loss, rng, loss_curvature)


def qnspsa_step(
    state: OptimizerState,
    hp: HyperParams,
    loss: LossOracle,
    fidelity: FidelityOracle,
    rng: np.random.Generator,
) -> OptimizerState:
    _check(state, "QNSPSA")

    def metric_curvature(theta, eps, delta, delta2, f_plus, f_minus):
        dF = (
            fidelity(theta, theta + eps * delta + eps * delta2)
            - fidelity(theta, theta + eps * delta)
            - fidelity(theta, theta - eps * delta + eps * delta2)
            + fidelity(theta, theta - eps * delta)
        )
        return -dF / (4 * eps**2)

    return _second_order_step(state, hp, loss, rng, metric_curvature)


def guiding_basis(buffer, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of span(buffer) via column-pivoted QR; drops null directions."""
    G = np.column_stack(buffer)
    Q, R, _ = scipy.linalg.qr(G, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros((G.shape[0], 0))
    return Q[:, diag > tol * diag[0]]


def ges_sample(state: OptimizerState, hp: dict, rng: np.random.Generator) -> np.ndarray:
    n, sigma, k = state.dim, hp["sigma"], int(hp["k"])
    xi = rng.standard_normal(n)
    if len(state.buffer) < k:
        return sigma * math.sqrt(1.0 / n) * xi
    U = guiding_basis(state.buffer)
    alpha = hp["alpha_mix"]
    delta = sigma * math.sqrt(alpha / n) * xi
    if U.shape[1]:
        xi2 = rng.standard_normal(U.shape[1])
        delta = delta + sigma * math.sqrt((1 - alpha) / U.shape[1]) * (U @ xi2)
    return delta


def ges_step(state: OptimizerState, hp: HyperParams, loss: LossOracle, rng: np.random.Generator) -> OptimizerState:
    _check(state, "GES")
    values = hp.values
    delta = ges_sample(state, values, rng)
    diff = loss(state.theta + delta) - loss(state.theta - delta)
    g = values["beta_scale"] * diff / (2 * values["sigma"] ** 2) * delta
    buffer = (state.buffer + (g,))[-int(values["k"]):]
    return replace(state, theta=state.theta - values["eta"] * g, i=state.i + 1, buffer=buffer)


def _utilities(fz: float, fz2: float) -> tuple[float, float]:
    if fz < fz2:
        return 0.5, -0.5
    if fz2 < fz:
        return -0.5, 0.5
    return 0.0, 0.0


def sym_expm(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    return (V * np.exp(w)) @ V.T


def xnes_step(state: OptimizerState, hp: HyperParams, loss: LossOracle, rng: np.random.Generator) -> OptimizerState:
    _check(state, "xNES")
    values = resolve(hp, state.dim)
    d, theta, sigma, B = state.dim, state.theta, state.sigma, state.B
    s = rng.standard_normal(d)
    s2 = rng.standard_normal(d)
    u, u2 = _utilities(loss(theta + sigma * (B.T @ s)), loss(theta + sigma * (B.T @ s2)))
    eye = np.eye(d)
    grad_mu = u * s + u2 * s2
    grad_M = u * (np.outer(s, s) - eye) + u2 * (np.outer(s2, s2) - eye)
    grad_sigma = np.trace(grad_M) / d
    grad_B = grad_M - grad_sigma * eye
    return replace(
        state,
        theta=theta + values["eta_mu"] * sigma * (B @ grad_mu),
        i=state.i + 1,
        sigma=sigma * float(np.exp(values["eta_sigma"] / 2 * grad_sigma)),
        B=B @ sym_expm(values["eta_B"] / 2 * grad_B),
    )


def snes_step(state: OptimizerState, hp: HyperParams, loss: LossOracle, rng: np.random.Generator) -> OptimizerState:
    _check(state, "sNES")
    values = resolve(hp, state.dim)
    d, theta, sigma = state.dim, state.theta, state.sigma
    s = rng.standard_normal(d)
    s2 = rng.standard_normal(d)
    u, u2 = _utilities(loss(theta + sigma * s), loss(theta + sigma * s2))
    grad_mu = u * s + u2 * s2
    grad_sigma = u * (s**2 - 1) + u2 * (s2**2 - 1)
    return replace(
        state,
        theta=theta + values["eta_mu"] * sigma * grad_mu,
        i=state.i + 1,
        sigma=sigma * np.exp(values["eta_sigma"] / 2 * grad_sigma),
    )


_STEPPERS = {
    "SPSA": spsa_step,
    "AdamSPSA": adam_spsa_step,
    "2-SPSA": two_spsa_step,
    "GES": ges_step,
    "xNES": xnes_step,
    "sNES": snes_step,
}


def step(state, hp, loss, rng, fidelity: FidelityOracle | None = None) -> OptimizerState:
    """Dispatch one update; QNSPSA additionally needs ``fidelity``."""
    if state.algorithm == "QNSPSA":
        if fidelity is None:
            raise ConfigurationError("QNSPSA needs a fidelity oracle")
        return qnspsa_step(state, hp, loss, fidelity, rng)
    return _STEPPERS[state.algorithm](state, hp, loss, rng)
