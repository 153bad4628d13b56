"""Random-direction gradient estimation from noisy function values.

The estimator differences the cost along one random direction z at two nested
radii and combines them as 2*(half-radius estimate) - (full-radius estimate).
That combination cancels the second-order Taylor term along the path, so on a
quadratic it returns (z'grad)z exactly and in general the bias shrinks like
the squared smoothing radius. Each estimate costs exactly three value queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import NoiseModel, OracleCounters, query_szo

SAMPLER_KINDS = ("gaussian", "sphere")


@dataclass(frozen=True)
class DirectionSampler:
    """Isotropic direction distribution with E[zz'] = I.

    gaussian: standard normal; norm moments E||z||^4 = d(d+2),
    E||z||^6 = d(d+2)(d+4).
    sphere: uniform on the radius-sqrt(d) sphere; ||z|| = sqrt(d) exactly,
    E||z||^4 = d^2, E||z||^6 = d^3.
    """

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown direction sampler {self.kind!r}")

    @property
    def fourth_moment(self) -> float:
        d = self.dim
        return float(d * (d + 2)) if self.kind == "gaussian" else float(d * d)

    @property
    def sixth_moment(self) -> float:
        d = self.dim
        return float(d * (d + 2) * (d + 4)) if self.kind == "gaussian" else float(d**3)

    def from_normals(self, normals: np.ndarray) -> np.ndarray:
        """Map raw standard-normal draws (..., dim) to directions.

        Both kinds consume exactly dim normals per direction, so the two
        samplers stay stream-aligned.
        """
        if self.kind == "gaussian":
            return normals
        norms = np.linalg.norm(normals, axis=-1, keepdims=True)
        return np.sqrt(self.dim) * normals / norms

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.from_normals(rng.standard_normal(shape))


@dataclass(frozen=True)
class SmoothingSchedule:
    """Shrinking finite-difference radius c_k = c0 / (k+1)^delta.

    The canonical base radius is 1 / E||z||^4 of the paired direction sampler
    (see ``default_smoothing``); delta must stay below 1/2 so the noise
    amplification alpha_k^2 / c_k^2 remains summable.
    """

    c0: float
    delta: float

    def radius(self, k) -> float | np.ndarray:
        return self.c0 / np.asarray(k + 1, dtype=float) ** self.delta


def default_smoothing(sampler: DirectionSampler, delta: float = 1.0 / 6.0) -> SmoothingSchedule:
    return SmoothingSchedule(c0=1.0 / sampler.fourth_moment, delta=delta)


def twicing_combine(v_half: np.ndarray, v_full: np.ndarray, v_base: np.ndarray,
                    radius: float) -> np.ndarray:
    """Scalar coefficient of the estimate from the three queried values."""
    return (4.0 * (v_half - v_base) - (v_full - v_base)) / radius


def estimate_gradient_zo(
    problem,
    node: int,
    x: np.ndarray,
    radius: float,
    sampler: DirectionSampler,
    noise: NoiseModel,
    rng: np.random.Generator,
    counters: OracleCounters | None = None,
    direction: np.ndarray | None = None,
) -> np.ndarray:
    """One gradient estimate at x: three value queries along one direction.

    Queries, in order, x + (radius/2) z, x + radius z, and x, sharing the same
    direction z (drawn here unless supplied). Each query carries independent
    noise.
    """
    if radius <= 0:
        raise ValueError(f"smoothing radius must be positive, got {radius}")
    z = sampler.sample(rng) if direction is None else np.asarray(direction, dtype=float)
    v_half = query_szo(problem, node, x + (radius / 2.0) * z, noise, rng, counters)
    v_full = query_szo(problem, node, x + radius * z, noise, rng, counters)
    v_base = query_szo(problem, node, x, noise, rng, counters)
    return twicing_combine(v_half, v_full, v_base, radius) * z


@dataclass(frozen=True)
class BiasPoint:
    radius: float
    bias_norm: float
    std_error: float


def measure_bias(
    problem,
    x: np.ndarray,
    radii,
    sampler: DirectionSampler,
    samples: int,
    rng: np.random.Generator,
    node: int = 0,
    batch: int = 200_000,
) -> list[BiasPoint]:
    """Monte Carlo estimate of ||E[estimate] - grad|| per radius, noiseless.

    Noise is excluded on purpose: it is conditionally mean-zero, so it cannot
    move the expectation, only the Monte Carlo cost. The reported standard
    error is the norm of the per-coordinate standard errors of the sample
    mean.
    """
    x = np.asarray(x, dtype=float)
    grad = problem.local_grad(node, x)
    out = []
    for radius in radii:
        total = np.zeros(x.shape[-1])
        total_sq = np.zeros(x.shape[-1])
        done = 0
        while done < samples:
            m = min(batch, samples - done)
            z = sampler.sample(rng, size=m)
            v_base = problem.local_value(node, x[None, :])
            v_half = problem.local_value(node, x + (radius / 2.0) * z)
            v_full = problem.local_value(node, x + radius * z)
            est = twicing_combine(v_half, v_full, v_base, radius)[:, None] * z
            total += est.sum(axis=0)
            total_sq += np.square(est).sum(axis=0)
            done += m
        mean = total / samples
        var = np.maximum(total_sq / samples - mean**2, 0.0)
        se = float(np.sqrt(np.sum(var / samples)))
        out.append(BiasPoint(float(radius), float(np.linalg.norm(mean - grad)), se))
    return out


def bias_envelope(radius: float, lip_hess: float, sampler: DirectionSampler) -> float:
    """Guaranteed ceiling on the estimator bias norm at the given radius."""
    return (radius**2 / 4.0) * lip_hess * sampler.fourth_moment


def bias_slope(points: list[BiasPoint]) -> float:
    """Log-log slope of bias norm versus radius."""
    radii = np.array([p.radius for p in points])
    norms = np.array([p.bias_norm for p in points])
    if np.any(norms <= 0):
        raise ValueError("bias norms must be positive for a log-log fit")
    return float(np.polyfit(np.log(radii), np.log(norms), 1)[0])
