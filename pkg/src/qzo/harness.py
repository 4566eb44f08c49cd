"""Seeded benchmark runs, 100-run suites and 3-key random-search tuning.

Every source of randomness in a run is a named stream derived from the
run's master key, so all optimizers see the same circuit, objective and
initial parameters for a given key.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import optimizers as opt
from .circuits import CircuitTemplate, build_qcbm, build_random_layers, content_hash
from .errors import ConfigurationError
from .problems import (
    LossFunction,
    cardinality_target,
    energy_loss,
    heisenberg_2d,
    ising_1d,
    nll_loss,
    observable_hash,
    random_hamiltonian,
    random_target,
    target_hash,
)

log = logging.getLogger(__name__)

STREAM_LABELS = ("init", "circuit", "problem", "optimizer")
INIT_STD = math.pi
DEFAULT_TUNING_KEYS = (0, 1, 2)

PRESETS: dict[str, dict] = {
    "ising1d": {"n_qubits": 3, "n_rotations": 30, "n_cnots": 10, "n_steps": 500, "tune_steps": 500},
    "heis2d": {"side": 3, "n_rotations": 162, "n_cnots": 49, "n_steps": 2000, "tune_steps": 1000},
    "randham": {
        "n_qubits": 10, "n_single": 10, "n_pair": 20,
        "n_rotations": 30, "n_cnots": 10, "n_steps": 500, "tune_steps": 500,
    },
    "qcbm-card": {"n_qubits": 10, "n_layers": 10, "cardinality": 5, "n_steps": 5000, "tune_steps": 5000},
    "rand-dist": {"n_qubits": 5, "n_rotations": 100, "n_cnots": 30, "n_steps": 5000, "tune_steps": 5000},
}
TASKS = tuple(PRESETS)


def derive_stream(master_key: int, label: str) -> int:
    """64-bit sub-seed for one named randomness stream of a run."""
    if label not in STREAM_LABELS:
        raise ConfigurationError(f"unknown stream label {label!r}; expected one of {STREAM_LABELS}")
    digest = hashlib.blake2b(f"{int(master_key)}/{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def init_params(key: int, d: int) -> np.ndarray:
    if d < 1:
        raise ConfigurationError("need at least one parameter")
    return np.random.default_rng(key).normal(0.0, INIT_STD, size=d)


@dataclass(frozen=True)
class TaskSpec:
    """A benchmark id plus its size parameters (preset values unless overridden)."""

    task: str
    sizes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in PRESETS:
            raise ConfigurationError(f"unknown task {self.task!r}; expected one of {TASKS}")
        unknown = set(self.sizes) - set(PRESETS[self.task])
        if unknown:
            raise ConfigurationError(f"task {self.task} has no size parameters {sorted(unknown)}")
        object.__setattr__(self, "sizes", {**PRESETS[self.task], **self.sizes})

    def __getitem__(self, name):
        return self.sizes[name]

    def to_json(self) -> dict:
        return {"id": self.task, **self.sizes}


@dataclass(frozen=True, eq=False)
class Problem:
    template: CircuitTemplate
    loss: LossFunction
    circuit_hash: str
    problem_hash: str


def build_problem(spec: TaskSpec, master_key: int) -> Problem:
    circuit_key = derive_stream(master_key, "circuit")
    problem_key = derive_stream(master_key, "problem")
    s = spec.sizes
    if spec.task == "qcbm-card":
        template = build_qcbm(s["n_qubits"], s["n_layers"])
    elif spec.task == "heis2d":
        template = build_random_layers(circuit_key, s["side"] ** 2, s["n_rotations"], s["n_cnots"])
    else:
        template = build_random_layers(circuit_key, s["n_qubits"], s["n_rotations"], s["n_cnots"])

    if spec.task == "ising1d":
        obs = ising_1d(s["n_qubits"])
    elif spec.task == "heis2d":
        obs = heisenberg_2d(s["side"])
    elif spec.task == "randham":
        obs = random_hamiltonian(problem_key, s["n_qubits"], s["n_single"], s["n_pair"])
    else:
        target = (
            cardinality_target(s["n_qubits"], s["cardinality"])
            if spec.task == "qcbm-card"
            else random_target(problem_key, s["n_qubits"])
        )
        return Problem(template, nll_loss(template, target), template.digest(), target_hash(target))
    return Problem(template, energy_loss(template, obs), template.digest(), observable_hash(obs))


@dataclass(frozen=True)
class RunConfig:
    task: TaskSpec
    hyperparams: opt.HyperParams
    master_key: int
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigurationError("n_steps must be >= 1")

    def to_json(self) -> dict:
        return {
            "task": self.task.to_json(),
            "optimizer": self.hyperparams.to_json(),
            "master_key": self.master_key,
            "n_steps": self.n_steps,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        task = dict(doc["task"])
        return cls(
            TaskSpec(task.pop("id"), task),
            opt.HyperParams.from_json(doc["optimizer"]),
            int(doc["master_key"]),
            int(doc["n_steps"]),
        )


@dataclass
class RunRecord:
    """Outcome of one run. ``wall_time`` is informational and excluded from
    equality and from the JSONL record format."""

    config: RunConfig
    trace: list[float]
    loss_queries: list[int]
    fidelity_queries: list[int]
    hashes: dict
    status: str = "ok"
    error: str | None = None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def final(self) -> float:
        return self.trace[-1]

    @property
    def task(self) -> str:
        return self.config.task.task

    @property
    def optimizer(self) -> str:
        return self.config.hyperparams.algorithm


def run_single(config: RunConfig) -> RunRecord:
    start = time.perf_counter()
    trace: list[float] = []
    loss_queries: list[int] = []
    fid_queries: list[int] = []
    hashes: dict = {}
    try:
        problem = build_problem(config.task, config.master_key)
        theta = init_params(derive_stream(config.master_key, "init"), problem.template.n_params)
        hashes = {
            "circuit": problem.circuit_hash,
            "problem": problem.problem_hash,
            "init": hashlib.sha256(theta.tobytes()).hexdigest(),
        }
        rng = np.random.default_rng(derive_stream(config.master_key, "optimizer"))
        hp = config.hyperparams
        loss = opt.LossOracle(problem.loss)
        fid = opt.FidelityOracle(problem.template) if hp.algorithm == "QNSPSA" else None
        trace.append(problem.loss(theta))
        state = opt.init_state(hp, theta, initial_loss=trace[0])
        for _ in range(config.n_steps):
            n_loss = loss.query_count
            n_fid = fid.query_count if fid else 0
            state = opt.step(state, hp, loss, rng, fidelity=fid)
            loss_queries.append(loss.query_count - n_loss)
            fid_queries.append((fid.query_count if fid else 0) - n_fid)
            # second-order steppers already know f(theta')
            trace.append(state.last_loss if state.last_loss is not None else problem.loss(state.theta))
        status, error = "ok", None
    except Exception as exc:  # recorded, never raised: a suite must survive one bad run
        log.warning("run %s/%s key=%d failed: %s", config.task.task, config.hyperparams.algorithm, config.master_key, exc)
        status, error = "failed", f"{type(exc).__name__}: {exc}"
    return RunRecord(
        config, trace, loss_queries, fid_queries, hashes, status, error, time.perf_counter() - start
    )


def run_suite(
    task: TaskSpec,
    hp: opt.HyperParams,
    n_runs: int,
    base_key: int,
    n_steps: int | None = None,
    threads: int = 1,
) -> list[RunRecord]:
    """Runs with master keys ``base_key + r`` for ``r < n_runs``, in key order."""
    if n_runs < 1:
        raise ConfigurationError("n_runs must be >= 1")
    n_steps = task["n_steps"] if n_steps is None else n_steps
    configs = [RunConfig(task, hp, base_key + r, n_steps) for r in range(n_runs)]
    return run_many(configs, threads)


def run_many(configs: list[RunConfig], threads: int = 1) -> list[RunRecord]:
    if threads <= 1 or len(configs) <= 1:
        return [run_single(c) for c in configs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_single, configs))


@dataclass(frozen=True)
class SearchSpace:
    """Per-hyperparameter distributions, e.g. ``{"eta0": ("log-uniform", 1e-3, 1)}``
    or ``{"eta0": ("choice", [10, 0.1])}``."""

    params: dict
    n_trials: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")
        for name, spec in self.params.items():
            kind = spec[0]
            if kind == "choice":
                if not spec[1]:
                    raise ConfigurationError(f"{name}: empty choice list")
            elif kind in ("uniform", "log-uniform"):
                lo, hi = spec[1], spec[2]
                if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                    raise ConfigurationError(f"{name}: need finite bounds with lower < upper")
                if kind == "log-uniform" and lo <= 0:
                    raise ConfigurationError(f"{name}: log-uniform bounds must be positive")
            else:
                raise ConfigurationError(f"{name}: unknown distribution {kind!r}")

    @classmethod
    def from_json(cls, doc: dict) -> "SearchSpace":
        params = {}
        for name, spec in doc["params"].items():
            if spec["dist"] == "choice":
                params[name] = ("choice", list(spec["values"]))
            else:
                params[name] = (spec["dist"], float(spec["low"]), float(spec["high"]))
        return cls(params, int(doc.get("n_trials", 50)), int(doc.get("seed", 0)))

    def candidates(self) -> list[dict]:
        """Full grid when every entry is a small choice list, else seeded samples."""
        names = sorted(self.params)
        if all(self.params[n][0] == "choice" for n in names):
            grid = list(itertools.product(*(self.params[n][1] for n in names)))
            if len(grid) <= self.n_trials:
                return [dict(zip(names, point)) for point in grid]
        rng = np.random.default_rng(self.seed)
        out, seen = [], set()
        for _ in range(self.n_trials):
            point = {}
            for n in names:
                kind, *args = self.params[n]
                if kind == "choice":
                    point[n] = args[0][int(rng.integers(len(args[0])))]
                elif kind == "uniform":
                    point[n] = float(rng.uniform(args[0], args[1]))
                else:
                    point[n] = float(math.exp(rng.uniform(math.log(args[0]), math.log(args[1]))))
            key = tuple(point[n] for n in names)
            if key not in seen:
                seen.add(key)
                out.append(point)
        return out


def _default_distance(point: dict, algorithm: str) -> float:
    defaults = opt.DEFAULTS[algorithm]
    total = 0.0
    for name, value in point.items():
        ref = defaults.get(name)
        if ref is None:
            continue
        if value > 0 and ref > 0:
            total += (math.log(value) - math.log(ref)) ** 2
        else:
            total += (value - ref) ** 2
    return total


def random_search(
    task: TaskSpec,
    algorithm: str,
    space: SearchSpace,
    tuning_keys=DEFAULT_TUNING_KEYS,
    n_steps: int | None = None,
    threads: int = 1,
) -> opt.HyperParams:
    """Pick the candidate with the lowest mean final loss over the tuning keys.

    Ties go to the candidate nearest (in log scale) to the algorithm defaults.
    """
    n_steps = task["tune_steps"] if n_steps is None else n_steps
    candidates = [opt.HyperParams(algorithm, point) for point in space.candidates()]
    configs = [RunConfig(task, hp, int(k), n_steps) for hp in candidates for k in tuning_keys]
    records = run_many(configs, threads)
    n_keys = len(tuning_keys)
    scores = []
    for c, hp in enumerate(candidates):
        finals = []
        for rec in records[c * n_keys:(c + 1) * n_keys]:
            ok = rec.status == "ok" and math.isfinite(rec.final)
            finals.append(rec.final if ok else math.inf)
        score = float(np.mean(finals))
        scores.append(math.inf if math.isnan(score) else score)
        log.info("trial %d %s -> %.6g", c, {n: hp.values[n] for n in space.params}, scores[-1])
    if all(math.isinf(s) for s in scores):
        raise RuntimeError(f"every tuning trial failed for {algorithm} on {task.task}")
    return select_best(candidates, scores, list(space.params))


def select_best(candidates: list[opt.HyperParams], scores: list[float], names, rel_tol: float = 1e-12) -> opt.HyperParams:
    """Lowest score wins; candidates within ``rel_tol`` of it count as tied and
    the one nearest the algorithm defaults is taken."""
    best = min(scores)
    tied = [c for c, s in enumerate(scores) if s <= best + rel_tol * max(1.0, abs(best))]
    algorithm = candidates[0].algorithm
    pick = min(tied, key=lambda c: (_default_distance({n: candidates[c].values[n] for n in names}, algorithm), c))
    return candidates[pick]
