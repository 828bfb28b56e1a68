"""Agent graphs and uniform combination weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ._random import generator

logger = logging.getLogger(__name__)

TOPOLOGY_KINDS = ("ring", "random-geometric", "edges", "complete")


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class TopologySpec:
    """Description of a graph to build.

    ``kind`` is one of ``ring``, ``random-geometric``, ``edges`` or
    ``complete``.  ``radius`` and ``seed`` are used by ``random-geometric``;
    ``edges`` holds zero-based undirected pairs for ``edges``.
    """

    kind: str = "random-geometric"
    n_agents: int = 16
    radius: float | None = None
    seed: int = 7
    edges: tuple[tuple[int, int], ...] = ()
    target_degree: float = 5.0
    max_retries: int = 100


@dataclass(frozen=True, eq=False)
class Topology:
    n_agents: int
    neighborhoods: tuple[frozenset, ...]
    adjacency: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.adjacency.setflags(write=False)

    @property
    def degrees(self) -> np.ndarray:
        """Neighborhood sizes ``|N_k|`` (self included)."""
        return self.adjacency.sum(axis=0)

    def links(self) -> np.ndarray:
        """Directed links ``(sender, receiver)``, sender != receiver, in
        lexicographic order."""
        src, dst = np.nonzero(self.adjacency & ~np.eye(self.n_agents, dtype=bool))
        return np.column_stack([src, dst])

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return self.n_agents == other.n_agents and np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash((self.n_agents, self.adjacency.tobytes()))


@dataclass(frozen=True, eq=False)
class CombinationWeights:
    """Column-stochastic weights, ``a[l, k]`` is the weight node ``k`` gives
    to node ``l``."""

    a: np.ndarray
    c: np.ndarray


def from_adjacency(adjacency) -> Topology:
    adj = np.array(adjacency, dtype=bool)
    n = adj.shape[0]
    if adj.ndim != 2 or adj.shape != (n, n):
        raise TopologyError(f"adjacency must be square, got shape {adj.shape}")
    if n < 2:
        raise TopologyError(f"need at least 2 agents, got {n}")
    if not np.array_equal(adj, adj.T):
        raise TopologyError("adjacency must be symmetric (undirected graph)")
    adj = adj | np.eye(n, dtype=bool)
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    if n_comp > 1:
        counts = np.bincount(labels)
        smallest = int(np.argmin(counts))
        members = np.flatnonzero(labels == smallest).tolist()
        raise TopologyError(
            f"graph is disconnected: {n_comp} components; isolated component {members}"
        )
    hoods = tuple(frozenset(np.flatnonzero(adj[:, k]).tolist()) for k in range(n))
    return Topology(n, hoods, adj)


def _ring(n: int) -> np.ndarray:
    adj = np.zeros((n, n), dtype=bool)
    idx = np.arange(n)
    adj[idx, (idx + 1) % n] = True
    adj[(idx + 1) % n, idx] = True
    return adj


def default_radius(n_agents: int, target_degree: float = 5.0) -> float:
    """Radius giving an expected neighborhood size (self included) of about
    ``target_degree`` for points uniform on the unit square."""
    # expected neighbors ~ (n - 1) * pi * r^2, ignoring border losses
    return float(np.sqrt(max(target_degree - 1.0, 0.5) / (np.pi * max(n_agents - 1, 1))) * 1.15)


def _random_geometric(n: int, radius: float, seed: int, retries: int) -> np.ndarray:
    for attempt in range(retries):
        pos = generator(seed, "topology", attempt).random((n, 2))
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        adj = dist <= radius
        n_comp, _ = connected_components(csr_matrix(adj), directed=False)
        if n_comp == 1:
            return adj
    logger.warning("no connected random-geometric graph after %d tries; using ring", retries)
    return _ring(n)


def build_topology(spec: TopologySpec) -> Topology:
    n = int(spec.n_agents)
    if n < 2:
        raise TopologyError(f"need at least 2 agents, got {n}")
    if spec.kind == "ring":
        adj = _ring(n)
    elif spec.kind == "complete":
        adj = np.ones((n, n), dtype=bool)
    elif spec.kind == "random-geometric":
        radius = spec.radius if spec.radius is not None else default_radius(n, spec.target_degree)
        adj = _random_geometric(n, radius, spec.seed, spec.max_retries)
    elif spec.kind == "edges":
        adj = np.zeros((n, n), dtype=bool)
        for l, k in spec.edges:
            if not (0 <= l < n and 0 <= k < n):
                raise TopologyError(f"edge ({l}, {k}) out of range for {n} agents")
            adj[l, k] = adj[k, l] = True
    else:
        raise TopologyError(f"unknown topology kind {spec.kind!r}; expected one of {TOPOLOGY_KINDS}")
    return from_adjacency(adj)


def uniform_weights(topology: Topology) -> CombinationWeights:
    adj = topology.adjacency.astype(float)
    w = adj / adj.sum(axis=0, keepdims=True)
    return CombinationWeights(a=w, c=w.copy())
