import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asymmlfc.netgraph import (
    DisconnectedGraph,
    InvalidEdge,
    Schedule,
    build_graph,
    complete_edges,
    diameter,
    erdos_edges,
    make_graph,
    next_awakening,
    path_edges,
    read_graph,
    ring_edges,
    write_graph,
)


def floyd_warshall_diameter(n, edges):
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for i, j in edges:
        d[i, j] = d[j, i] = 1
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return int(d.max())


def test_single_edge():
    g = build_graph(2, [(0, 1)])
    assert g.node_count == 2 and g.diameter == 1
    assert g.neighbors(0) == (1,)
    assert g.degree(0) == 2


def test_path3_diameter():
    assert build_graph(3, [(0, 1), (1, 2)]).diameter == 2


def test_known_diameters():
    assert build_graph(10, ring_edges(10)).diameter == 5
    assert diameter(build_graph(4, complete_edges(4))) == 1
    assert diameter(build_graph(5, path_edges(5))) == 4


def test_erdos12_matches_floyd_warshall():
    edges = erdos_edges(12, 0.3, seed=0)
    assert build_graph(12, edges).diameter == floyd_warshall_diameter(12, edges)


@given(st.integers(2, 12), st.floats(0.15, 0.9), st.integers(0, 10_000))
def test_bfs_diameter_matches_floyd_warshall(n, p, seed):
    edges = erdos_edges(n, p, seed)
    assert build_graph(n, edges).diameter == floyd_warshall_diameter(n, edges)


def test_edges_are_undirected_and_sorted_neighbours():
    g = build_graph(4, [(3, 0), (0, 1), (2, 1)])
    assert (0, 3) in g.edges and (3, 0) not in g.edges
    assert g.neighbors(0) == (1, 3)
    assert g.column_of(0, 3) == 1 and g.column_of(0, 0) == 2


@pytest.mark.parametrize("edges,exc", [
    ([(0, 0)], InvalidEdge),
    ([(0, 3)], InvalidEdge),
    ([(0, -1)], InvalidEdge),
    ([(0, 1)], DisconnectedGraph),
])
def test_graph_errors(edges, exc):
    with pytest.raises(exc):
        build_graph(3, edges)


def test_duplicate_edge_rejected():
    with pytest.raises(InvalidEdge):
        build_graph(2, [(0, 1), (1, 0)])


def test_single_node_graph():
    g = build_graph(1, [])
    assert g.neighbors(0) == () and g.diameter == 1


def test_make_graph_specs(tmp_path):
    assert len(make_graph("ring", 6).edges) == 6
    assert len(make_graph("path", 6).edges) == 5
    assert len(make_graph("complete", 5).edges) == 10
    assert make_graph("erdos:0.5", 8, seed=3) == make_graph("erdos:0.5", 8, seed=3)
    g = make_graph("ring", 5)
    f = tmp_path / "g.txt"
    write_graph(g, f)
    assert read_graph(f) == g
    assert make_graph(str(f), 5) == g


def test_ring_of_two_is_one_edge():
    assert ring_edges(2) == [(0, 1)]


def test_schedule_seed7_window():
    s = Schedule(3, 7)
    draws = s.take(6)
    assert s.max_gap == 5
    for k in range(len(draws) - s.max_gap + 1):
        assert set(draws[k:k + s.max_gap]) == {0, 1, 2}


def test_schedule_singleton():
    s = Schedule(1, 0)
    assert [next_awakening(s) for _ in range(20)] == [0] * 20


def test_schedule_determinism():
    assert Schedule(7, 11).take(1000) == Schedule(7, 11).take(1000)
    assert Schedule(7, 11).take(50) != Schedule(7, 12).take(50)


@given(st.integers(1, 15), st.integers(0, 2**31 - 1))
def test_every_window_covers_all_nodes(n, seed):
    s = Schedule(n, seed)
    draws = s.take(6 * n + 3)
    assert s.trace == draws
    for k in range(len(draws) - s.max_gap + 1):
        assert set(draws[k:k + s.max_gap]) == set(range(n))


def test_gap_bound_is_tight_for_some_seed():
    # node last in one round and first in the next: gap 2N - 1 exactly
    n = 4
    worst = 0
    for seed in range(200):
        draws = Schedule(n, seed).take(8 * n)
        for v in range(n):
            pos = [k for k, x in enumerate(draws) if x == v]
            worst = max(worst, max(b - a for a, b in itertools.pairwise(pos)))
    assert worst == 2 * n - 1
