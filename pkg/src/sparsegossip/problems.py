"""Strongly convex local cost families and the stochastic oracles over them.

Every problem is a sum of per-node costs with known strong convexity mu,
gradient Lipschitz constant, Hessian Lipschitz constant and an exactly known
global minimizer, so error curves can be measured against a certified optimum.
Oracles return noisy values (SZO) or noisy gradients (SFO); noise is zero-mean
Gaussian whose variance meets the model bound base + scale*||x||^2 with
equality at the queried point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAD_AT_OPT_TOL = 1e-10


class ProblemError(ValueError):
    """Invalid problem construction."""


@dataclass
class OracleCounters:
    """Cumulative oracle-query ledger for one run (the computation cost)."""

    szo: int = 0
    sfo: int = 0


@dataclass(frozen=True)
class NoiseModel:
    """Variance parameters of the measurement noise at a query point x.

    Value queries get zero-mean Gaussian noise with variance
    value_var_base + value_var_scale * ||x||^2; gradient queries get an i.i.d.
    Gaussian vector whose squared norm has expectation
    grad_var_base + grad_var_scale * ||x||^2.
    """

    value_var_base: float = 0.0
    value_var_scale: float = 0.0
    grad_var_base: float = 0.0
    grad_var_scale: float = 0.0

    @classmethod
    def from_std(cls, value_std: float = 0.0, grad_std: float = 0.0,
                 value_scale: float = 0.0, grad_scale: float = 0.0) -> "NoiseModel":
        return cls(value_std**2, value_scale, grad_std**2, grad_scale)

    def value_std(self, x: np.ndarray) -> np.ndarray:
        sq = np.sum(np.square(x), axis=-1)
        return np.sqrt(self.value_var_base + self.value_var_scale * sq)

    def grad_coord_std(self, x: np.ndarray) -> np.ndarray:
        d = x.shape[-1]
        sq = np.sum(np.square(x), axis=-1)
        return np.sqrt((self.grad_var_base + self.grad_var_scale * sq) / d)


NOISELESS = NoiseModel()


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """Sum of per-node quadratics 0.5 x'Q_i x + b_i'x + c_i.

    Covers both the synthetic quadratic family and least-squares empirical
    risk (kind tag tells them apart); the Hessian Lipschitz constant is zero
    in either case.
    """

    quad: np.ndarray   # (N, d, d), each symmetric
    lin: np.ndarray    # (N, d)
    const: np.ndarray  # (N,)
    mu: float
    lip_grad: float
    minimizer: np.ndarray
    kind: str = "quadratic"
    lip_hess: float = 0.0

    @property
    def n_nodes(self) -> int:
        return self.quad.shape[0]

    @property
    def dim(self) -> int:
        return self.quad.shape[1]

    def local_value(self, node: int, x: np.ndarray) -> np.ndarray:
        q = self.quad[node]
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, q, x) + x @ self.lin[node] + self.const[node]

    def local_grad(self, node: int, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.quad[node] + self.lin[node]

    def stacked_values(self, x: np.ndarray) -> np.ndarray:
        """f_i(x_i) for all nodes at once; x has one row per node."""
        return (
            0.5 * np.einsum("...ni,nij,...nj->...n", x, self.quad, x)
            + np.einsum("...ni,ni->...n", x, self.lin)
            + self.const
        )

    def stacked_grads(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("nij,...nj->...ni", self.quad, x) + self.lin

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the sum cost at a single point x."""
        return np.einsum("nij,j->i", self.quad, x) + self.lin.sum(axis=0)


def quadratic_from_terms(quad, lin, const=None, kind: str = "quadratic") -> QuadraticProblem:
    """Build from explicit per-node (Q_i, b_i) terms; solves for the optimum."""
    quad = np.asarray(quad, dtype=float)
    lin = np.asarray(lin, dtype=float)
    if quad.ndim != 3 or quad.shape[1] != quad.shape[2] or lin.shape != quad.shape[:2]:
        raise ProblemError(f"shape mismatch: quad {quad.shape}, lin {lin.shape}")
    if const is None:
        const = np.zeros(quad.shape[0])
    total = quad.sum(axis=0)
    minimizer = np.linalg.solve(total, -lin.sum(axis=0))
    eigs = np.concatenate([np.linalg.eigvalsh(q) for q in quad])
    mu = float(eigs.min())
    lip = float(eigs.max())
    if mu <= 0:
        raise ProblemError(f"local curvature must be positive, got min eigenvalue {mu:g}")
    problem = QuadraticProblem(
        quad=quad, lin=lin, const=np.asarray(const, dtype=float),
        mu=mu, lip_grad=lip, minimizer=minimizer, kind=kind,
    )
    _check_optimum(problem)
    return problem


def _check_optimum(problem) -> None:
    resid = float(np.linalg.norm(problem.global_grad(problem.minimizer)))
    cap = GRAD_AT_OPT_TOL * (1.0 + float(np.linalg.norm(problem.minimizer)))
    if resid > cap:
        raise ProblemError(f"gradient at computed optimum has norm {resid:.3e} > {cap:.3e}")


def make_quadratic_problem(
    n_nodes: int, dim: int, mu: float, lip_grad: float, rng: np.random.Generator,
    spread: float = 1.0,
) -> QuadraticProblem:
    """Random heterogeneous quadratic instance with spectrum inside [mu, lip_grad].

    Each node's curvature matrix is a random orthogonal conjugation of a
    diagonal that includes both endpoints (for dim >= 2), and the linear terms
    are chosen so local minimizers are spread apart: local gradients do not
    vanish at the global optimum.
    """
    if not (0 < mu <= lip_grad):
        raise ProblemError(f"need 0 < mu <= lip_grad, got mu={mu}, lip_grad={lip_grad}")
    quad = np.empty((n_nodes, dim, dim))
    lin = np.empty((n_nodes, dim))
    for i in range(n_nodes):
        if dim == 1:
            eigs = np.array([mu if n_nodes == 1 or i % 2 == 0 else lip_grad])
        else:
            eigs = np.concatenate([[mu, lip_grad], rng.uniform(mu, lip_grad, size=dim - 2)])
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        quad[i] = (q * eigs) @ q.T
        quad[i] = 0.5 * (quad[i] + quad[i].T)
        local_min = spread * rng.standard_normal(dim)
        lin[i] = -quad[i] @ local_min
    return quadratic_from_terms(quad, lin)


def make_erm_problem(
    features: np.ndarray, targets: np.ndarray, n_nodes: int, reg: float
) -> QuadraticProblem:
    """Least-squares empirical risk with an l2 penalty, split contiguously.

    Node i holds a contiguous slice of the rows (remainder spread one row per
    node) and owns f_i(x) = mean squared residual / 2 + reg/2 * ||x||^2.
    The strong convexity constant is reported conservatively as reg; the
    gradient Lipschitz constant comes from the largest per-node Gram spectrum.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or len(targets) != len(features):
        raise ProblemError(f"bad data shapes: {features.shape}, {targets.shape}")
    if not np.all(np.isfinite(features)) or not np.all(np.isfinite(targets)):
        raise ProblemError("non-finite entries in the dataset")
    if reg <= 0:
        raise ProblemError(f"regularization must be positive, got {reg}")
    sizes = partition_sizes(len(features), n_nodes)
    if min(sizes) == 0:
        raise ProblemError(f"{len(features)} rows cannot fill {n_nodes} non-empty partitions")
    dim = features.shape[1]
    quad = np.empty((n_nodes, dim, dim))
    lin = np.empty((n_nodes, dim))
    const = np.empty(n_nodes)
    start = 0
    lip = 0.0
    for i, size in enumerate(sizes):
        rows = slice(start, start + size)
        start += size
        a, y = features[rows], targets[rows]
        gram = a.T @ a / size
        quad[i] = gram + reg * np.eye(dim)
        lin[i] = -(a.T @ y) / size
        const[i] = 0.5 * float(y @ y) / size
        lip = max(lip, float(np.linalg.eigvalsh(gram)[-1]))
    total = quad.sum(axis=0)
    minimizer = np.linalg.solve(total, -lin.sum(axis=0))
    problem = QuadraticProblem(
        quad=quad, lin=lin, const=const,
        mu=reg, lip_grad=reg + lip, minimizer=minimizer, kind="erm-least-squares",
    )
    _check_optimum(problem)
    return problem


def partition_sizes(n_rows: int, n_nodes: int) -> list[int]:
    """Contiguous partition sizes; the remainder goes one row per node."""
    base, extra = divmod(n_rows, n_nodes)
    return [base + 1 if i < extra else base for i in range(n_nodes)]


@dataclass(frozen=True, eq=False)
class CubicProbe:
    """Single-node cost with controlled third-order structure.

    f(x) = mu/2 ||x||^2 + (lip_hess/6) * sum_j s(x_j) where s is the cubic
    t^3 blended to quadratic growth outside [-box, box]; its second derivative
    is 6*clip(t, -box, box), so the Hessian of f is lip_hess-Lipschitz exactly.
    Bias of finite-difference gradient estimators is measured against this
    probe at fixed points; it is not meant for full optimization runs.
    """

    dim_: int
    mu: float
    lip_hess: float
    box: float = 1.0
    kind: str = "cubic-regularized"
    lip_grad: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "lip_grad", self.mu + self.lip_hess * self.box)

    @property
    def n_nodes(self) -> int:
        return 1

    @property
    def dim(self) -> int:
        return self.dim_

    @property
    def minimizer(self) -> np.ndarray:
        return np.zeros(self.dim_)

    def _s(self, t: np.ndarray) -> np.ndarray:
        b = self.box
        inner = np.clip(t, -b, b)
        over = np.clip(t - b, 0.0, None)
        under = np.clip(t + b, None, 0.0)
        return (
            inner**3
            + (3 * b**2 + 3 * b * over) * over
            + (3 * b**2 - 3 * b * under) * under
        )

    def _s_prime(self, t: np.ndarray) -> np.ndarray:
        b = self.box
        inner = np.clip(t, -b, b)
        over = np.clip(t - b, 0.0, None)
        under = np.clip(t + b, None, 0.0)
        return 3 * inner**2 + 6 * b * over - 6 * b * under

    def local_value(self, node: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * self.mu * np.sum(x * x, axis=-1) + (self.lip_hess / 6.0) * np.sum(
            self._s(x), axis=-1
        )

    def local_grad(self, node: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.mu * x + (self.lip_hess / 6.0) * self._s_prime(x)

    def stacked_values(self, x: np.ndarray) -> np.ndarray:
        return self.local_value(0, x)

    def stacked_grads(self, x: np.ndarray) -> np.ndarray:
        return self.local_grad(0, x)

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        return self.local_grad(0, x)


def make_cubic_probe(dim: int, mu: float = 1.0, lip_hess: float = 1.0, box: float = 1.0) -> CubicProbe:
    return CubicProbe(dim_=dim, mu=mu, lip_hess=lip_hess, box=box)


def query_szo(
    problem, node: int, x: np.ndarray, noise: NoiseModel,
    rng: np.random.Generator, counters: OracleCounters | None = None,
) -> float:
    """One noisy function-value query at x; always consumes one normal draw."""
    if counters is not None:
        counters.szo += 1
    x = np.asarray(x, dtype=float)
    eta = rng.standard_normal()
    return float(problem.local_value(node, x)) + float(noise.value_std(x)) * eta


def query_sfo(
    problem, node: int, x: np.ndarray, noise: NoiseModel,
    rng: np.random.Generator, counters: OracleCounters | None = None,
) -> np.ndarray:
    """One noisy gradient query at x; always consumes dim normal draws."""
    if counters is not None:
        counters.sfo += 1
    x = np.asarray(x, dtype=float)
    eps = rng.standard_normal(x.shape[-1])
    return problem.local_grad(node, x) + float(noise.grad_coord_std(x)) * eps
