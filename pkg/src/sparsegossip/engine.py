"""Synchronous distributed optimization loop over the sparsified gossip network.

One iteration mixes neighbor iterates over the realized random links and
simultaneously subtracts a stochastic local-gradient step, both evaluated at
the pre-mix iterate. Methods: "zeroth" (three-query value-based gradient
estimate), "first" (noisy gradient oracle), and their "-baseline" variants in
which every allowable link carries every round with the expected mixing
weight, so only communication cost differs from the sparsified runs.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .metrics import Trace, compute_row
from .network import (ProtocolSchedule, Topology, activation_from_uniforms,
                      mixing_step, protocol_flags, validate_protocol)
from .problems import NoiseModel, OracleCounters
from .rng import NodeDraws
from .zo import DirectionSampler, SmoothingSchedule

METHODS = ("zeroth", "first", "zeroth-baseline", "first-baseline")


class ConfigError(ValueError):
    """Configuration violates a validated precondition."""


class DivergenceError(RuntimeError):
    """Iterate escaped the divergence guard."""

    def __init__(self, iteration: int, node: int, magnitude: float):
        super().__init__(
            f"divergence at iteration {iteration}: node {node} reached |x| = {magnitude:.3e}"
        )
        self.iteration = iteration
        self.node = node


@dataclass(frozen=True)
class StepSchedule:
    """Innovation step size alpha_k = alpha0 / (k + 1 + offset)."""

    alpha0: float
    offset: int = 0

    def at(self, k: int) -> float:
        return self.alpha0 / (k + 1 + self.offset)


@dataclass
class NetworkState:
    """Mutable per-run state: iterate, clock and cumulative cost ledgers."""

    k: int
    x: np.ndarray
    comm_realized: float
    comm_expected: float
    counters: OracleCounters


@dataclass(frozen=True, eq=False)
class RunConfig:
    method: str
    topology: Topology
    problem: object
    protocol: ProtocolSchedule
    steps: StepSchedule
    noise: NoiseModel
    smoothing: SmoothingSchedule | None = None
    sampler: DirectionSampler | None = None
    horizon: int = 10_000
    seed: int = 0
    log_gamma: float | None = 1.05
    log_every: int | None = None
    initial: np.ndarray | None = None
    test_features: np.ndarray | None = None
    test_targets: np.ndarray | None = None
    divergence_limit: float = 1e12


def check_config(config: RunConfig) -> list[str]:
    """Collect violations (fatal) and emit advisory warnings (non-fatal)."""
    violations = []
    if config.method not in METHODS:
        violations.append(f"unknown method {config.method!r}; choose from {METHODS}")
    if config.topology.node_count != config.problem.n_nodes:
        violations.append(
            f"topology has {config.topology.node_count} nodes but the problem has "
            f"{config.problem.n_nodes}"
        )
    violations.extend(validate_protocol(config.topology, config.protocol))
    if config.horizon < 0:
        violations.append(f"horizon must be nonnegative, got {config.horizon}")
    if config.steps.alpha0 < 0:
        violations.append(f"step constant alpha0 must be nonnegative, got {config.steps.alpha0}")
    if config.method.startswith("zeroth"):
        if config.smoothing is None or config.sampler is None:
            violations.append("zeroth-order methods need a smoothing schedule and a direction sampler")
        else:
            if not (0 < config.smoothing.delta < 0.5):
                violations.append(
                    f"smoothing decay delta = {config.smoothing.delta} outside (0, 1/2); "
                    "the noise amplification would not be summable"
                )
            if config.sampler.dim != config.problem.dim:
                violations.append(
                    f"direction sampler dimension {config.sampler.dim} != problem dimension "
                    f"{config.problem.dim}"
                )
    if config.initial is not None:
        want = (config.problem.n_nodes, config.problem.dim)
        if np.shape(config.initial) != want:
            violations.append(f"initial state must have shape {want}, got {np.shape(config.initial)}")
    if violations:
        return violations

    mu = config.problem.mu
    if config.method.startswith("zeroth") and config.steps.alpha0 * mu <= 1.0:
        warnings.warn(
            f"alpha0 = {config.steps.alpha0:g} <= 1/mu = {1.0 / mu:g}: the guaranteed "
            "mean-square rate degrades below the nominal one",
            stacklevel=2,
        )
    if config.method.startswith("first") and config.steps.alpha0 * mu <= 2.0:
        warnings.warn(
            f"alpha0 = {config.steps.alpha0:g} <= 2/mu = {2.0 / mu:g}: expect a slower "
            "log(k)/k mean-square rate",
            stacklevel=2,
        )
    if config.method.startswith("zeroth") and config.smoothing is not None:
        canonical = 1.0 / config.sampler.fourth_moment
        if not math.isclose(config.smoothing.c0, canonical, rel_tol=1e-9):
            warnings.warn(
                f"smoothing base radius c0 = {config.smoothing.c0:g} overrides the canonical "
                f"1/E||z||^4 = {canonical:g}",
                stacklevel=2,
            )
    for flag in protocol_flags(config.topology, config.protocol):
        warnings.warn(flag, stacklevel=2)
    return []


class RunStreams:
    """All random streams one run consumes, keyed by purpose.

    Baseline runs never touch the activation streams, so a sparsified run and
    its baseline share identical direction and noise sequences for the same
    seed (common random numbers).
    """

    def __init__(self, config: RunConfig):
        n = config.problem.n_nodes
        d = config.problem.dim
        seed = config.seed
        self.activation = None
        self.direction = None
        self.value_noise = None
        self.grad_noise = None
        if not config.method.endswith("baseline"):
            self.activation = NodeDraws(seed, n, "activation", kind="uniform")
        if config.method.startswith("zeroth"):
            self.direction = NodeDraws(seed, n, "direction", width=d, kind="normal")
            self.value_noise = NodeDraws(seed, n, "value_noise", width=3, kind="normal")
        else:
            self.grad_noise = NodeDraws(seed, n, "grad_noise", width=d, kind="normal")


def _zo_innovation(x: np.ndarray, k: int, config: RunConfig, streams: RunStreams,
                   points: np.ndarray) -> np.ndarray:
    """Stacked three-query gradient estimates at the pre-mix iterates.

    Vectorizes the per-node estimator: one shared direction per node, queries
    at x + (c/2)z, x + cz, x in that order, independent noise per query.
    """
    c = config.smoothing.radius(k)
    z = config.sampler.from_normals(streams.direction.take())
    points[0] = x + (0.5 * c) * z
    points[1] = x + c * z
    points[2] = x
    values = config.problem.stacked_values(points)        # (3, N)
    eps = streams.value_noise.take()                      # (N, 3)
    noisy = values + config.noise.value_std(points) * eps.T
    coeff = (4.0 * (noisy[0] - noisy[2]) - (noisy[1] - noisy[2])) / c
    return coeff[:, None] * z


def _fo_innovation(x: np.ndarray, config: RunConfig, streams: RunStreams) -> np.ndarray:
    """Stacked noisy gradients at the pre-mix iterates."""
    grads = config.problem.stacked_grads(x)
    eps = streams.grad_noise.take()
    return grads + config.noise.grad_coord_std(x)[:, None] * eps


def step_zeroth(state: NetworkState, config: RunConfig, streams: RunStreams,
                points: np.ndarray | None = None) -> NetworkState:
    """One sparsified round with the value-based gradient estimate."""
    n = config.topology.node_count
    if points is None:
        points = np.empty((3, n, config.problem.dim))
    k = state.k
    round_ = activation_from_uniforms(config.topology, config.protocol, k,
                                      streams.activation.take())
    mixed = mixing_step(config.topology, round_, state.x)
    ghat = _zo_innovation(state.x, k, config, streams, points)
    state.x = mixed - config.steps.at(k) * ghat
    state.counters.szo += 3 * n
    state.comm_realized += round_.transmit_count / n
    state.comm_expected += float(config.protocol.zeta(k + 1))
    state.k = k + 1
    return state


def step_first(state: NetworkState, config: RunConfig, streams: RunStreams) -> NetworkState:
    """One sparsified round with the noisy gradient oracle."""
    n = config.topology.node_count
    k = state.k
    round_ = activation_from_uniforms(config.topology, config.protocol, k,
                                      streams.activation.take())
    mixed = mixing_step(config.topology, round_, state.x)
    grad = _fo_innovation(state.x, config, streams)
    state.x = mixed - config.steps.at(k) * grad
    state.counters.sfo += n
    state.comm_realized += round_.transmit_count / n
    state.comm_expected += float(config.protocol.zeta(k + 1))
    state.k = k + 1
    return state


def step_baseline(state: NetworkState, config: RunConfig, streams: RunStreams,
                  points: np.ndarray | None = None) -> NetworkState:
    """One static-graph round: every link mixes with the expected weight.

    Every node transmits, so the per-node cost is exactly one transmission per
    round; the innovation term follows the configured method.
    """
    n = config.topology.node_count
    k = state.k
    beta = float(config.protocol.beta(k))
    mixed = state.x - beta * (config.topology.laplacian @ state.x)
    if config.method.startswith("zeroth"):
        if points is None:
            points = np.empty((3, n, config.problem.dim))
        innovation = _zo_innovation(state.x, k, config, streams, points)
        state.counters.szo += 3 * n
    else:
        innovation = _fo_innovation(state.x, config, streams)
        state.counters.sfo += n
    state.x = mixed - config.steps.at(k) * innovation
    state.comm_realized += 1.0
    state.comm_expected += 1.0
    state.k = k + 1
    return state


def checkpoints(horizon: int, log_gamma: float | None = 1.05,
                log_every: int | None = None) -> list[int]:
    """Iteration indices at which metrics are recorded (always 0 and horizon)."""
    ks = {0, horizon}
    if log_every is not None:
        if log_every < 1:
            raise ConfigError(f"log_every must be >= 1, got {log_every}")
        ks.update(range(0, horizon + 1, log_every))
    else:
        gamma = log_gamma if log_gamma is not None else 1.05
        if gamma <= 1.0:
            raise ConfigError(f"log_gamma must exceed 1, got {gamma}")
        v = 1.0
        while True:
            k = math.ceil(v)
            if k > horizon:
                break
            ks.add(k)
            v *= gamma
    return sorted(ks)


def initial_state(config: RunConfig) -> NetworkState:
    if config.initial is not None:
        x = np.array(config.initial, dtype=float)
    else:
        x = np.zeros((config.problem.n_nodes, config.problem.dim))
    return NetworkState(k=0, x=x, comm_realized=0.0, comm_expected=0.0,
                        counters=OracleCounters())


def run(config: RunConfig, check: bool = True) -> Trace:
    """Execute one full run; deterministic given (config, seed)."""
    if check:
        violations = check_config(config)
        if violations:
            raise ConfigError("; ".join(violations))
    streams = RunStreams(config)
    state = initial_state(config)
    n, d = config.problem.n_nodes, config.problem.dim
    points = np.empty((3, n, d)) if config.method.startswith("zeroth") else None
    marks = checkpoints(config.horizon, config.log_gamma, config.log_every)
    mark_set = set(marks)
    rows = [compute_row(state, config.problem, config.test_features, config.test_targets)]
    limit = config.divergence_limit

    if config.method == "zeroth":
        stepper = lambda: step_zeroth(state, config, streams, points)  # noqa: E731
    elif config.method == "first":
        stepper = lambda: step_first(state, config, streams)  # noqa: E731
    else:
        stepper = lambda: step_baseline(state, config, streams, points)  # noqa: E731

    for _ in range(config.horizon):
        stepper()
        peak = np.abs(state.x).max()
        if not peak < limit:
            per_node = np.abs(state.x).max(axis=1)
            per_node = np.where(np.isnan(per_node), np.inf, per_node)
            raise DivergenceError(state.k, int(np.argmax(per_node)), float(peak))
        if state.k in mark_set:
            rows.append(compute_row(state, config.problem,
                                    config.test_features, config.test_targets))
    return Trace(rows=tuple(rows))


def _run_with_seed(args: tuple[RunConfig, int]) -> Trace:
    config, seed = args
    return run(replace(config, seed=seed), check=False)


def run_ensemble(config: RunConfig, seeds, jobs: int | None = None) -> list[Trace]:
    """Independent runs over seeds, in seed order; parallel across processes.

    Each run owns its state and streams; results do not depend on the worker
    pool size.
    """
    seeds = list(seeds)
    violations = check_config(config)
    if violations:
        raise ConfigError("; ".join(violations))
    if jobs is None:
        jobs = max(1, min(len(seeds), os.cpu_count() or 1))
    if jobs == 1 or len(seeds) == 1:
        return [run(replace(config, seed=s), check=False) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_with_seed, [(config, s) for s in seeds]))
