"""Communication topologies: construction, Laplacians, and spectral quantities.

Graphs are undirected with unit edge weights. In leader-follower mode one
node is marked as the leader: it influences its neighbours but receives no
input itself, so its Laplacian row is zero and the matrix is no longer
symmetric. Spectral quantities (``lambda2``, partition eigenvalues) are
consumed by the analysis layer only; the protocols never see them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DisconnectedGraphError

Edge = tuple[int, int]


@dataclass(frozen=True)
class Graph:
    """Validated undirected communication graph with an optional leader."""

    n_nodes: int
    edges: tuple[Edge, ...]
    leader: int | None = None

    def has_edge(self, i: int, j: int) -> bool:
        a, b = (i, j) if i < j else (j, i)
        return (a, b) in self._edge_set

    @property
    def _edge_set(self) -> frozenset[Edge]:
        # cached on first use; object.__setattr__ because the dataclass is frozen
        cached = self.__dict__.get("_edge_set_cache")
        if cached is None:
            cached = frozenset(self.edges)
            object.__setattr__(self, "_edge_set_cache", cached)
        return cached

    def neighbors(self, i: int) -> tuple[int, ...]:
        out = [b if a == i else a for (a, b) in self.edges if i in (a, b)]
        return tuple(sorted(out))

    def degree(self, i: int) -> int:
        """Number of incident edges (structural; ignores leader orientation)."""
        return len(self.neighbors(i))

    def adjacency(self) -> np.ndarray:
        """Binary adjacency matrix; row i marks the in-neighbours of node i.

        The leader row is zero: the leader accepts no influence.
        """
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=int)
        for (i, j) in self.edges:
            a[i, j] = 1
            a[j, i] = 1
        if self.leader is not None:
            a[self.leader, :] = 0
        return a


@dataclass(frozen=True)
class LaplacianView:
    """Laplacian of a graph plus, in leader mode, its partition blocks.

    ``L`` is symmetric for leaderless graphs. In leader mode the leader row
    is zero and the follower block ``L1`` (followers in ascending public
    index) with coupling column ``L2`` satisfy ``L = [[0, 0], [L2, L1]]``
    after permuting the leader to the front.
    """

    L: np.ndarray
    degrees: np.ndarray
    L1: np.ndarray | None = None
    L2: np.ndarray | None = None


def build_graph(n: int, edges, leader: int | None = None) -> Graph:
    """Validate and canonicalize a graph given as an edge list.

    Edges are stored as (min, max) pairs in lexicographic order. Rejects
    out-of-range indices, self-loops and duplicate edges (regardless of
    orientation).
    """
    if not isinstance(n, int) or n <= 0:
        raise ConfigError(f"node count must be a positive integer, got {n!r}")
    canon = []
    seen = set()
    for e in edges:
        try:
            i, j = int(e[0]), int(e[1])
        except (TypeError, ValueError, IndexError):
            raise ConfigError(f"edge {e!r} is not a pair of node indices") from None
        if i == j:
            raise ConfigError(f"self-loop ({i},{j}) is not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise ConfigError(f"edge ({i},{j}) out of range for {n} nodes")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ConfigError(f"duplicate edge ({i},{j})")
        seen.add(key)
        canon.append(key)
    if leader is not None:
        leader = int(leader)
        if not (0 <= leader < n):
            raise ConfigError(f"leader index {leader} out of range for {n} nodes")
    return Graph(n_nodes=n, edges=tuple(sorted(canon)), leader=leader)


def generate_graph(name: str, n: int, leader: int | None = None) -> Graph:
    """Named generators: ring, path, complete, star (hub at node 0)."""
    if n <= 0:
        raise ConfigError(f"node count must be positive, got {n}")
    if name == "ring":
        if n < 3:
            raise ConfigError("ring needs at least 3 nodes")
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif name == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif name == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif name == "star":
        edges = [(0, i) for i in range(1, n)]
    else:
        raise ConfigError(f"unknown graph generator {name!r}")
    return build_graph(n, edges, leader=leader)


def laplacian(g: Graph) -> LaplacianView:
    """Laplacian with l_ii = sum_j a_ij and l_ij = -a_ij.

    Built in integer arithmetic, so row sums are exactly zero before the
    float conversion. Leader mode zeroes the leader row and attaches the
    partition blocks.
    """
    a = g.adjacency()
    lap = np.diag(a.sum(axis=1)) - a
    degrees = np.diag(lap).copy()
    assert (lap.sum(axis=1) == 0).all()
    l_float = lap.astype(float)
    if g.leader is None:
        return LaplacianView(L=l_float, degrees=degrees)
    l1, l2 = leader_partition(g)
    return LaplacianView(L=l_float, degrees=degrees, L1=l1, L2=l2)


def is_connected(g: Graph) -> bool:
    """Breadth-first connectivity over the undirected edge set."""
    if g.n_nodes == 1:
        return True
    adj = {i: [] for i in range(g.n_nodes)}
    for (i, j) in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == g.n_nodes


def has_leader_spanning_tree(g: Graph) -> bool:
    """Every follower reachable from the leader.

    Paths run through the leader's outgoing edges and the undirected
    follower-follower edges, which is exactly breadth-first search from the
    leader over the undirected edge set.
    """
    if g.leader is None:
        raise ValueError("graph has no leader")
    adj = {i: [] for i in range(g.n_nodes)}
    for (i, j) in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {g.leader}
    stack = [g.leader]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == g.n_nodes


def lambda2(g: Graph) -> float:
    """Second-smallest Laplacian eigenvalue of a connected leaderless graph.

    Analysis-side oracle only; raises on disconnected graphs instead of
    returning the uninformative 0.
    """
    if g.leader is not None:
        raise ValueError("lambda2 is defined for leaderless graphs")
    if not is_connected(g):
        raise DisconnectedGraphError(
            f"graph with {g.n_nodes} nodes and {len(g.edges)} edges is disconnected"
        )
    w = np.linalg.eigvalsh(laplacian(g).L)
    return float(w[1])


def leader_partition(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """Partition blocks (L1, L2) of the Laplacian with the leader first.

    The leader is permuted internally to index 0; followers keep ascending
    public order inside L1. Under the spanning-tree assumption L1 is
    symmetric positive definite.
    """
    if g.leader is None:
        raise ValueError("graph has no leader")
    order = [g.leader] + [i for i in range(g.n_nodes) if i != g.leader]
    a = g.adjacency()
    lap = (np.diag(a.sum(axis=1)) - a).astype(float)
    perm = lap[np.ix_(order, order)]
    return perm[1:, 1:].copy(), perm[1:, :1].copy()
