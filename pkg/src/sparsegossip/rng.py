"""Deterministic counter-based random streams.

Each simulation run derives one independent Philox stream per (node, purpose)
pair from the master seed. A node's draws therefore never depend on how many
draws other nodes consumed, results are independent of node iteration order,
and two runs that share a seed share the exact same noise sequences even when
they differ in communication pattern (common random numbers).
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "activation": 0,   # per-iteration transmit decisions
    "direction": 1,    # random search directions for gradient estimation
    "value_noise": 2,  # function-value measurement noise
    "grad_noise": 3,   # gradient measurement noise
    "scratch": 4,      # test-only / auxiliary draws
}


def node_stream(master_seed: int, node: int, purpose: str) -> np.random.Generator:
    """Independent generator for one (node, purpose) pair."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(node, PURPOSES[purpose]))
    return np.random.Generator(np.random.Philox(seq))


def node_streams(master_seed: int, n_nodes: int, purpose: str) -> list[np.random.Generator]:
    return [node_stream(master_seed, i, purpose) for i in range(n_nodes)]


class NodeDraws:
    """Per-iteration draws for all nodes, one independent stream per node.

    ``take()`` returns the next (n_nodes,) or (n_nodes, width) array;
    consecutive calls hand out consecutive draws from each node's stream.
    Draws are buffered in fixed-size blocks so the per-iteration cost is a
    slice, and the served values are identical to drawing one iteration at a
    time from each node's generator.
    """

    def __init__(
        self,
        master_seed: int,
        n_nodes: int,
        purpose: str,
        width: int | None = None,
        kind: str = "normal",
        block: int = 4096,
    ):
        if kind not in ("normal", "uniform"):
            raise ValueError(f"unknown draw kind {kind!r}")
        self._gens = node_streams(master_seed, n_nodes, purpose)
        self._n = n_nodes
        self._width = width
        self._kind = kind
        self._block = block
        self._buf = None
        self._ptr = block

    def _refill(self) -> None:
        per_node = self._block if self._width is None else (self._block, self._width)
        if self._kind == "normal":
            cols = [g.standard_normal(per_node) for g in self._gens]
        else:
            cols = [g.random(per_node) for g in self._gens]
        # buffer layout: (block, n_nodes[, width])
        self._buf = np.stack(cols, axis=1)
        self._ptr = 0

    def take(self) -> np.ndarray:
        if self._ptr >= self._block:
            self._refill()
        out = self._buf[self._ptr]
        self._ptr += 1
        return out
