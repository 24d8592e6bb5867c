"""The three trainers: full-batch gradient descent, damped least-squares
root finding on the stacked residual system, and elitist ensemble random
search.

All trainers are deterministic given (config, seed, initial gains) and
never mutate their inputs; each returns a TrainTrace holding the per-epoch
cost history and the final gain set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .gradient import cost, cost_gradient, network_param_gradient
from .linalg import ShapeError, SolveFailure, solve
from .network import NetworkSpec, check_gains, forward

# Damping above this level means the solver cannot make progress.
DAMPING_LIMIT = 1e12


class TrainingError(RuntimeError):
    """A trainer hit a non-recoverable numerical problem."""


@dataclass(frozen=True)
class GdConfig:
    learning_rate: float
    epochs: int

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass(frozen=True)
class RsmConfig:
    ensemble_size: int
    radius: float
    epochs: int
    elitism: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ValueError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass(frozen=True)
class RootFindConfig:
    max_iterations: int = 50
    function_tol: float = 1e-12
    step_tol: float = 1e-12
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.function_tol < 0 or self.step_tol < 0:
            raise ValueError("tolerances must be >= 0")
        if self.initial_damping <= 0:
            raise ValueError(f"initial_damping must be > 0, got {self.initial_damping}")
        if self.damping_up <= 1 or self.damping_down <= 1:
            raise ValueError("damping factors must be > 1")


@dataclass
class EpochRecord:
    epoch: int
    cost: float
    wall_ms: float


@dataclass
class TrainTrace:
    """Per-epoch history of one training run.

    records[0] is the state before any update. snapshots, when recorded,
    holds the flattened gains for every record in the same order.
    """

    method: str
    records: list[EpochRecord] = field(default_factory=list)
    gains: list[np.ndarray] = field(default_factory=list)
    snapshots: list[np.ndarray] | None = None
    status: str = "completed"


def flatten_gains(gains) -> np.ndarray:
    """Flatten a gain list: matrices in order, each column by column."""
    return np.concatenate([theta.T.reshape(-1) for theta in gains])


def unflatten_gains(spec: NetworkSpec, flat: np.ndarray) -> list[np.ndarray]:
    """Inverse of flatten_gains for the given architecture."""
    if flat.shape != (spec.param_count,):
        raise ShapeError(
            f"expected {spec.param_count} parameters, got shape {flat.shape}"
        )
    gains = []
    offset = 0
    for rows, cols in spec.gain_shapes:
        block = flat[offset : offset + rows * cols]
        gains.append(block.reshape(cols, rows).T.copy())
        offset += rows * cols
    return gains


def _start_trace(method, spec, gains, dataset, record_gains) -> TrainTrace:
    trace = TrainTrace(method=method)
    trace.records.append(EpochRecord(0, cost(spec, gains, dataset), 0.0))
    trace.gains = [theta.copy() for theta in gains]
    if record_gains:
        trace.snapshots = [flatten_gains(gains)]
    return trace


def _record(trace, epoch, value, wall_ms, gains, record_gains):
    trace.records.append(EpochRecord(epoch, value, wall_ms))
    trace.gains = [theta.copy() for theta in gains]
    if record_gains:
        trace.snapshots.append(flatten_gains(gains))


def gd_step(spec: NetworkSpec, gains, dataset: Dataset, alpha: float):
    """One full-batch descent update: every gain moves against its partial."""
    if alpha <= 0:
        raise ValueError(f"learning rate must be > 0, got {alpha}")
    grads = cost_gradient(spec, gains, dataset)
    for k, g in enumerate(grads):
        if not np.isfinite(g).all():
            bad = np.argwhere(~np.isfinite(g))[0]
            raise TrainingError(
                f"non-finite gradient in gain matrix {k}, neuron column "
                f"{bad[1]}, row {bad[0]}"
            )
    return [theta - alpha * g for theta, g in zip(gains, grads)]


def train_gd(
    spec: NetworkSpec,
    init_gains,
    dataset: Dataset,
    cfg: GdConfig,
    record_gains: bool = False,
) -> TrainTrace:
    """Run cfg.epochs gradient descent steps, recording cost after each."""
    check_gains(spec, init_gains)
    trace = _start_trace("GD", spec, init_gains, dataset, record_gains)
    gains = init_gains
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        gains = gd_step(spec, gains, dataset, cfg.learning_rate)
        value = cost(spec, gains, dataset)
        wall_ms = (time.perf_counter() - t0) * 1e3
        _record(trace, epoch, value, wall_ms, gains, record_gains)
    return trace


def rsm_step(
    spec: NetworkSpec,
    gains,
    dataset: Dataset,
    cfg: RsmConfig,
    rng: np.random.Generator,
):
    """One random-search epoch.

    Draws ensemble_size candidates by adding radius * standard normal noise
    to every gain entry, evaluates the cost of each, and returns the best.
    With elitism the incumbent joins the pool (and wins ties, keeping the
    cost sequence non-increasing); ties otherwise go to the lowest member
    index. The generator state advances by exactly ensemble_size draws per
    gain matrix.
    """
    pool = []
    if cfg.elitism:
        pool.append(gains)
    for _ in range(cfg.ensemble_size):
        pool.append(
            [theta + cfg.radius * rng.standard_normal(theta.shape) for theta in gains]
        )
    costs = [cost(spec, member, dataset) for member in pool]
    best = int(np.argmin(costs))
    return pool[best]


def train_rsm(
    spec: NetworkSpec,
    init_gains,
    dataset: Dataset,
    cfg: RsmConfig,
    record_gains: bool = False,
) -> TrainTrace:
    """Run cfg.epochs random-search epochs from a generator seeded with
    cfg.seed."""
    check_gains(spec, init_gains)
    rng = np.random.default_rng(cfg.seed)
    trace = _start_trace("RSM", spec, init_gains, dataset, record_gains)
    gains = init_gains
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        gains = rsm_step(spec, gains, dataset, cfg, rng)
        value = cost(spec, gains, dataset)
        wall_ms = (time.perf_counter() - t0) * 1e3
        _record(trace, epoch, value, wall_ms, gains, record_gains)
    return trace


def residual_vector(spec: NetworkSpec, gains, dataset: Dataset) -> np.ndarray:
    """Stacked prediction-minus-target residuals, sample major."""
    if len(dataset) == 0:
        raise ValueError("residual system needs a non-empty dataset")
    parts = [forward(spec, gains, x).output - y for x, y in dataset]
    return np.concatenate(parts)


def residual_jacobian(spec: NetworkSpec, gains, dataset: Dataset) -> np.ndarray:
    """Jacobian of residual_vector with respect to the flattened gains.

    Rows follow residual_vector order; columns follow flatten_gains order
    (gain matrices in sequence, column by column).
    """
    if len(dataset) == 0:
        raise ValueError("residual system needs a non-empty dataset")
    ly = spec.output_width
    jac = np.zeros((len(dataset) * ly, spec.param_count))
    for m, (x, _) in enumerate(dataset):
        trace = forward(spec, gains, x)
        blocks = network_param_gradient(spec, gains, trace)
        row = m * ly
        col = 0
        for per_neuron in blocks:
            for block in per_neuron:
                width = block.shape[1]
                jac[row : row + ly, col : col + width] = block
                col += width
    return jac


def _lm_step(jac: np.ndarray, r: np.ndarray, damping: float) -> np.ndarray:
    """Solve (J^T J + damping I) s = -J^T r.

    When there are more parameters than residuals the equivalent dual system
    (J J^T + damping I) u = -r, s = J^T u is solved instead, so the factored
    matrix is always the smaller Gram matrix.
    """
    n_res, n_par = jac.shape
    if n_par <= n_res:
        a = jac.T @ jac + damping * np.eye(n_par)
        return solve(a, -jac.T @ r)
    a = jac @ jac.T + damping * np.eye(n_res)
    return jac.T @ solve(a, -r)


def train_rootfind(
    spec: NetworkSpec,
    init_gains,
    dataset: Dataset,
    cfg: RootFindConfig,
    record_gains: bool = False,
) -> TrainTrace:
    """Levenberg-Marquardt iteration on the stacked residual system.

    A step is accepted only if it reduces the residual norm; accepted steps
    lower the damping, rejected ones raise it and retry within the same
    iteration. Terminates on the iteration cap, a residual below
    function_tol, a step below step_tol, or damping escalating past
    DAMPING_LIMIT ("stalled", best gains so far are kept).
    """
    check_gains(spec, init_gains)
    trace = _start_trace("FS", spec, init_gains, dataset, record_gains)
    gains = [theta.copy() for theta in init_gains]
    r = residual_vector(spec, gains, dataset)
    norm = float(np.linalg.norm(r))
    if np.abs(r).max() < cfg.function_tol:
        trace.status = "converged"
        return trace
    damping = cfg.initial_damping
    flat = flatten_gains(gains)
    for accepted in range(1, cfg.max_iterations + 1):
        t0 = time.perf_counter()
        jac = residual_jacobian(spec, gains, dataset)
        step = None
        while True:
            try:
                candidate_step = _lm_step(jac, r, damping)
                candidate_flat = flat + candidate_step
                candidate = unflatten_gains(spec, candidate_flat)
                candidate_r = residual_vector(spec, candidate, dataset)
                candidate_norm = float(np.linalg.norm(candidate_r))
                if candidate_norm < norm:
                    step = candidate_step
                    break
            except SolveFailure:
                pass
            damping *= cfg.damping_up
            if damping > DAMPING_LIMIT:
                trace.status = "stalled"
                return trace
        flat, gains, r, norm = candidate_flat, candidate, candidate_r, candidate_norm
        damping /= cfg.damping_down
        wall_ms = (time.perf_counter() - t0) * 1e3
        _record(trace, accepted, norm * norm, wall_ms, gains, record_gains)
        if np.abs(r).max() < cfg.function_tol:
            trace.status = "converged"
            return trace
        if np.abs(step).max() < cfg.step_tol:
            trace.status = "converged"
            return trace
    return trace
