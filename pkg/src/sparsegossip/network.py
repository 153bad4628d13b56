"""Gossip network: fixed allowable graph plus the randomized sparsifying protocol.

The allowable-communication graph is fixed. Each iteration every node draws an
independent activation coin; a link carries traffic only when both endpoints
activated, with per-link mixing weight rho_k**2. Activation probability and
link weight both decay over time, so communication becomes increasingly sparse
while the expected mixing matrix stays a scaled version of the fixed graph
Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

SPECTRAL_TOL = 1e-9


class TopologyError(ValueError):
    """Invalid graph: bad edges or disconnected."""


@dataclass(frozen=True, eq=False)
class Topology:
    """Fixed allowable-communication graph with cached spectral quantities.

    ``laplacian`` is the unweighted graph Laplacian (degree matrix minus
    adjacency); ``lambda2`` its algebraic connectivity and ``lambda_max`` its
    largest eigenvalue. ``incidence`` maps edge differences back to nodes:
    column e of ``incidence`` is +1 at the edge tail, -1 at the head, so the
    Laplacian factors as ``incidence @ incidence.T``.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...]
    laplacian: np.ndarray
    lambda2: float
    lambda_max: float
    edge_tails: np.ndarray
    edge_heads: np.ndarray
    incidence: np.ndarray


def build_topology(node_count: int, edges: Sequence[tuple[int, int]]) -> Topology:
    """Validate the edge list, cache the Laplacian and its spectrum.

    Rejects self-loops, duplicate edges, out-of-range node indices and graphs
    whose algebraic connectivity is below ``SPECTRAL_TOL`` (disconnected).
    A single node with no edges is allowed (communication is vacuous); its
    algebraic connectivity is reported as +inf.
    """
    if node_count == 1:
        if edges:
            raise TopologyError("a single-node graph cannot have edges")
        return Topology(
            node_count=1,
            edges=(),
            neighbors=((),),
            laplacian=np.zeros((1, 1)),
            lambda2=float("inf"),
            lambda_max=0.0,
            edge_tails=np.zeros(0, dtype=np.intp),
            edge_heads=np.zeros(0, dtype=np.intp),
            incidence=np.zeros((1, 0)),
        )
    if node_count < 2:
        raise TopologyError(f"need at least 2 nodes, got {node_count}")
    seen: set[tuple[int, int]] = set()
    normalized: list[tuple[int, int]] = []
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise TopologyError(f"self-loop at node {i}")
        if not (0 <= i < node_count and 0 <= j < node_count):
            raise TopologyError(f"edge ({i},{j}) references a node outside 0..{node_count - 1}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise TopologyError(f"duplicate edge {key}")
        seen.add(key)
        normalized.append(key)
    normalized.sort()

    lap = np.zeros((node_count, node_count))
    nbrs: list[list[int]] = [[] for _ in range(node_count)]
    for i, j in normalized:
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
        lap[i, i] += 1.0
        lap[j, j] += 1.0
        nbrs[i].append(j)
        nbrs[j].append(i)

    eig = np.linalg.eigvalsh(lap)
    lambda2 = float(eig[1])
    if lambda2 <= SPECTRAL_TOL:
        raise TopologyError(
            f"graph is disconnected: algebraic connectivity {lambda2:.3e} <= {SPECTRAL_TOL}"
        )

    n_edges = len(normalized)
    tails = np.array([e[0] for e in normalized], dtype=np.intp)
    heads = np.array([e[1] for e in normalized], dtype=np.intp)
    incid = np.zeros((node_count, n_edges))
    incid[tails, np.arange(n_edges)] = 1.0
    incid[heads, np.arange(n_edges)] = -1.0

    return Topology(
        node_count=node_count,
        edges=tuple(normalized),
        neighbors=tuple(tuple(sorted(n)) for n in nbrs),
        laplacian=lap,
        lambda2=lambda2,
        lambda_max=float(eig[-1]),
        edge_tails=tails,
        edge_heads=heads,
        incidence=incid,
    )


def complete_graph(n: int) -> Topology:
    return build_topology(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def ring_graph(n: int) -> Topology:
    if n == 2:
        return build_topology(2, [(0, 1)])
    return build_topology(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Topology:
    return build_topology(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(n: int) -> Topology:
    return build_topology(n, [(0, i) for i in range(1, n)])


@dataclass(frozen=True)
class ProtocolSchedule:
    """Decaying activation/weight schedule of the sparsifying protocol.

    rho_k  = rho0 / (k+1)^(epsilon/2)        per-link weight of a transmission
    zeta_k = zeta0 / (k+1)^((tau-epsilon)/2) per-node activation probability
    beta_k = (rho_k * zeta_k)^2 = beta0 / (k+1)^tau, beta0 = rho0^2 * zeta0^2

    Constraints (0 < tau <= 1/2, 0 < epsilon < tau, zeta0 in (0,1]) are checked
    by ``validate_protocol``, not by the constructor, so that invalid
    configurations can be reported rather than half-built.
    """

    rho0: float
    zeta0: float
    tau: float
    epsilon: float

    @property
    def beta0(self) -> float:
        return (self.rho0 * self.zeta0) ** 2

    def rho(self, k: int) -> float:
        return self.rho0 / (k + 1) ** (self.epsilon / 2)

    def zeta(self, k) -> float | np.ndarray:
        return self.zeta0 / np.asarray(k + 1, dtype=float) ** ((self.tau - self.epsilon) / 2)

    def beta(self, k) -> float | np.ndarray:
        return self.beta0 / np.asarray(k + 1, dtype=float) ** self.tau


def validate_protocol(topology: Topology, schedule: ProtocolSchedule) -> list[str]:
    """Return the list of violated protocol conditions (empty means ok).

    Checks, in order: the link-weight bound rho0^2 <= 4 N^2 / lambda2, the
    probability bound zeta0 in (0,1], the exponent ordering
    0 < epsilon < tau <= 1/2, and the mixing-stability bound
    beta0 * lambda_max <= 1 which keeps the expected contraction factors of
    the gossip step inside [0, 1].
    """
    violations = []
    n = topology.node_count
    if not schedule.rho0 > 0:
        violations.append(f"initial link weight rho0 = {schedule.rho0} must be positive")
    elif topology.edges:
        weight_cap = 4.0 * n * n / topology.lambda2
        if schedule.rho0**2 > weight_cap:
            violations.append(
                f"rho0^2 = {schedule.rho0 ** 2:g} exceeds 4*N^2/lambda2 = {weight_cap:g}"
            )
    if not (0 < schedule.zeta0 <= 1):
        violations.append(f"activation probability zeta0 = {schedule.zeta0} outside (0, 1]")
    if not (0 < schedule.tau <= 0.5 and 0 < schedule.epsilon < schedule.tau):
        violations.append(
            f"decay exponents need 0 < epsilon < tau <= 1/2, got tau = {schedule.tau}, "
            f"epsilon = {schedule.epsilon}"
        )
    if schedule.beta0 * topology.lambda_max > 1.0 + 1e-12:
        violations.append(
            f"beta0 * lambda_max = {schedule.beta0 * topology.lambda_max:g} > 1; "
            "mixing weights may overshoot (reduce rho0 or zeta0)"
        )
    return violations


def protocol_flags(topology: Topology, schedule: ProtocolSchedule) -> list[str]:
    """Non-fatal configuration flags (reported, never rejected)."""
    flags = []
    n = topology.node_count
    if 4.0 * n * n * schedule.rho0**2 > topology.lambda2:
        flags.append(
            "conservative contraction margin is negative at k=0 "
            f"(4*N^2*rho0^2 = {4 * n * n * schedule.rho0 ** 2:g} > lambda2 = "
            f"{topology.lambda2:g}); consensus may contract slowly early on"
        )
    return flags


@dataclass(frozen=True, eq=False)
class ActivationRound:
    """One realized round of the protocol: who transmits, which links carry.

    ``active`` marks nodes whose coin came up (psi_i = rho_k); a link is live
    only when both endpoints are active, and then carries weight rho_k**2.
    """

    k: int
    rho: float
    active: np.ndarray
    active_edge_idx: np.ndarray
    transmit_count: int

    @property
    def weight(self) -> float:
        return self.rho * self.rho


def activation_from_uniforms(
    topology: Topology, schedule: ProtocolSchedule, k: int, uniforms: np.ndarray
) -> ActivationRound:
    """Build the round from pre-drawn per-node uniforms (one per node)."""
    active = uniforms < schedule.zeta(k)
    live = active[topology.edge_tails] & active[topology.edge_heads]
    return ActivationRound(
        k=k,
        rho=schedule.rho(k),
        active=active,
        active_edge_idx=np.flatnonzero(live),
        transmit_count=int(active.sum()),
    )


def sample_activation(
    topology: Topology,
    schedule: ProtocolSchedule,
    k: int,
    streams: Sequence[np.random.Generator],
) -> ActivationRound:
    """Draw one activation round, one independent coin per node stream."""
    uniforms = np.array([g.random() for g in streams])
    return activation_from_uniforms(topology, schedule, k, uniforms)


def mixing_step(topology: Topology, round_: ActivationRound, x: np.ndarray) -> np.ndarray:
    """Apply one sparse gossip averaging step to the stacked state.

    x has one row per node. Equivalent to multiplying by I minus the realized
    Laplacian (Kronecker-extended to the state dimension) without ever forming
    that matrix; only live edges contribute.
    """
    w = np.zeros(len(topology.edges))
    w[round_.active_edge_idx] = round_.weight
    return x - topology.incidence @ (w[:, None] * (topology.incidence.T @ x))


def realized_laplacian(topology: Topology, round_: ActivationRound) -> np.ndarray:
    """Dense realized Laplacian of one round. Test/diagnostic export only."""
    w = np.zeros(len(topology.edges))
    w[round_.active_edge_idx] = round_.weight
    return topology.incidence @ (w[:, None] * topology.incidence.T)


def expected_laplacian(topology: Topology, schedule: ProtocolSchedule, k: int) -> np.ndarray:
    """Entrywise mean of the realized Laplacian at iteration k: beta_k * L."""
    return schedule.beta(k) * topology.laplacian


def offdiag_variance(schedule: ProtocolSchedule, k: int) -> float:
    """Variance of one allowable off-diagonal entry of the realized Laplacian."""
    kp = float(k + 1)
    b0 = schedule.beta0
    return b0 * schedule.rho0**2 / kp ** (schedule.tau + schedule.epsilon) - b0**2 / kp ** (
        2 * schedule.tau
    )


def expected_comm_cost(schedule: ProtocolSchedule, k: int) -> float:
    """Expected per-node transmissions after k rounds: sum_{t=1..k} zeta_t."""
    if k < 1:
        return 0.0
    t = np.arange(1, k + 1, dtype=float)
    return float(np.sum(schedule.zeta(t)))
