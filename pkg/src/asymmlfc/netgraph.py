"""Communication graph and the asynchronous awakening scheduler."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class InvalidEdge(GraphError):
    pass


@dataclass(frozen=True)
class Graph:
    node_count: int
    edges: frozenset
    adjacency: tuple
    diameter: int

    def neighbors(self, i: int) -> tuple:
        return self.adjacency[i]

    def degree(self, i: int) -> int:
        """Size of the closed neighbourhood, i.e. ``|N_i| + 1``."""
        return len(self.adjacency[i]) + 1

    def column_of(self, i: int, j: int) -> int:
        """Column of node ``j`` inside node ``i``'s logic-AND matrix.

        Neighbours occupy columns in sorted order; ``i`` itself owns the last one.
        """
        if j == i:
            return len(self.adjacency[i])
        return self.adjacency[i].index(j)


def _bfs_eccentricity(adjacency, source: int) -> int:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    if len(dist) != len(adjacency):
        raise DisconnectedGraph(f"node(s) unreachable from {source}")
    return max(dist.values())


def diameter(graph_or_adjacency) -> int:
    """Largest BFS eccentricity over all nodes."""
    adjacency = getattr(graph_or_adjacency, "adjacency", graph_or_adjacency)
    return max(_bfs_eccentricity(adjacency, s) for s in range(len(adjacency)))


def build_graph(node_count: int, edges: Iterable) -> Graph:
    """Validate an undirected edge list and precompute adjacency and diameter.

    A single isolated node is accepted; its diameter is reported as 1 so the
    logic-AND matrix keeps one row.
    """
    if node_count < 1:
        raise GraphError("node_count must be positive")
    canon = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if i == j:
            raise InvalidEdge(f"self-loop at node {i}")
        if not (0 <= i < node_count and 0 <= j < node_count):
            raise InvalidEdge(f"edge ({i}, {j}) out of range for N={node_count}")
        pair = (min(i, j), max(i, j))
        if pair in canon:
            raise InvalidEdge(f"duplicate edge {pair}")
        canon.add(pair)
    nbrs = [set() for _ in range(node_count)]
    for i, j in canon:
        nbrs[i].add(j)
        nbrs[j].add(i)
    adjacency = tuple(tuple(sorted(n)) for n in nbrs)
    d = 1 if node_count == 1 else diameter(adjacency)
    return Graph(node_count, frozenset(canon), adjacency, d)


# --- generators -----------------------------------------------------------

def ring_edges(n: int) -> list:
    if n == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n) for i in range(n)]


def path_edges(n: int) -> list:
    return [(i, i + 1) for i in range(n - 1)]


def complete_edges(n: int) -> list:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def erdos_edges(n: int, p: float, seed: int, max_tries: int = 1000) -> list:
    """Connected G(n, p) sample; resamples until connected."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
        try:
            build_graph(n, edges)
        except DisconnectedGraph:
            continue
        return edges
    raise GraphError(f"no connected G({n}, {p}) sample in {max_tries} tries")


def make_graph(spec: str, n: int, seed: int = 0) -> Graph:
    """Build a graph from a generator spec or an edge-list file.

    Recognised specs: ``ring``, ``path``, ``complete``, ``erdos:<p>``, or a path
    to a file in the edge-list format read by :func:`read_graph`.
    """
    if spec == "ring":
        return build_graph(n, ring_edges(n))
    if spec == "path":
        return build_graph(n, path_edges(n))
    if spec == "complete":
        return build_graph(n, complete_edges(n))
    if spec.startswith("erdos:"):
        return build_graph(n, erdos_edges(n, float(spec.split(":", 1)[1]), seed))
    g = read_graph(spec)
    if g.node_count != n:
        raise GraphError(f"graph file has {g.node_count} nodes, scenario needs {n}")
    return g


def read_graph(path) -> Graph:
    """Parse ``N <count>`` followed by one ``i j`` edge per line."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].split()[0] != "N":
        raise GraphError(f"{path}: missing 'N <count>' header")
    n = int(lines[0].split()[1])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise GraphError(f"{path}: bad edge line {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return build_graph(n, edges)


def write_graph(graph: Graph, path) -> None:
    out = [f"N {graph.node_count}"] + [f"{i} {j}" for i, j in sorted(graph.edges)]
    Path(path).write_text("\n".join(out) + "\n")


# --- scheduler ------------------------------------------------------------

@dataclass
class Schedule:
    """Random permutation of all nodes per round, rounds concatenated.

    Any node reappears within ``2N - 1`` events, one node is awake per event,
    and the trace is a pure function of the seed.
    """

    node_count: int
    rng_seed: int = 0
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.rng_seed)
        self._round: list = []

    @property
    def max_gap(self) -> int:
        return 2 * self.node_count - 1

    def next_awakening(self) -> int:
        if not self._round:
            self._round = [int(v) for v in self._rng.permutation(self.node_count)][::-1]
        node = self._round.pop()
        self.trace.append(node)
        return node

    def take(self, k: int) -> list:
        return [self.next_awakening() for _ in range(k)]


def next_awakening(schedule: Schedule) -> int:
    return schedule.next_awakening()
