import itertools
import math

import numpy as np
import pytest

from owpcce.bath import LatticeSpec, generate_bath
from owpcce.clusters import (DEFAULT_CUTOFF, build_neighbor_graph, enumerate_clusters, is_connected,
                             load_clusters, save_clusters)


def test_default_cutoff_is_third_shell():
    assert DEFAULT_CUTOFF == pytest.approx(math.sqrt(11) * 5.43 / 4)


def test_tiny_cutoff_gives_no_edges(small_bath):
    g = build_neighbor_graph(small_bath.positions, 1e-6)
    assert len(g.edges) == 0
    with pytest.raises(ValueError):
        build_neighbor_graph(small_bath.positions, 0.0)


def test_boundary_is_inclusive():
    q = np.array([[0, 0, 0], [3, 1, 1]]) * 5.43 / 4  # |r|^2 = 11 (a0/4)^2
    assert len(build_neighbor_graph(q).edges) == 1
    q2 = np.array([[0, 0, 0], [4, 0, 0]]) * 5.43 / 4
    assert len(build_neighbor_graph(q2).edges) == 0


def test_edges_match_brute_force():
    bath = generate_bath(LatticeSpec(superlattice_side=75.0, seed=11))
    pos = bath.positions[:500]
    assert len(pos) == 500
    g = build_neighbor_graph(pos)
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    i, j = np.nonzero(np.triu(d <= DEFAULT_CUTOFF * (1 + 1e-9), 1))
    assert set(map(tuple, g.edges.tolist())) == set(zip(i.tolist(), j.tolist()))
    assert np.all(g.edges[:, 0] < g.edges[:, 1])


def _graph_from_edges(n, edges):
    from owpcce.clusters import NeighborGraph

    nb = [set() for _ in range(n)]
    for a, b in edges:
        nb[a].add(b)
        nb[b].add(a)
    return NeighborGraph(n, np.array(sorted(edges)), tuple(frozenset(s) for s in nb), 1.0)


def test_triangle_and_path():
    tri = enumerate_clusters(_graph_from_edges(3, [(0, 1), (0, 2), (1, 2)]), 3)
    assert tri[2] == [(0, 1), (0, 2), (1, 2)] and tri[3] == [(0, 1, 2)]
    path = enumerate_clusters(_graph_from_edges(3, [(0, 1), (1, 2)]), 3)
    assert path[2] == [(0, 1), (1, 2)] and path[3] == [(0, 1, 2)]


def test_clusters_match_brute_force(rng):
    pos = rng.uniform(0, 14, size=(40, 3))
    g = build_neighbor_graph(pos, 4.0)
    got = enumerate_clusters(g, 5)
    for k in range(2, 6):
        ref = sorted(c for c in itertools.combinations(range(len(pos)), k) if is_connected(g, c))
        assert got[k] == ref


def test_k_max_bounds(small_bath):
    g = build_neighbor_graph(small_bath.positions)
    for bad in (1, 6):
        with pytest.raises(ValueError):
            enumerate_clusters(g, bad)


def test_default_bath_counts():
    bath = generate_bath(LatticeSpec(seed=1))
    cl = enumerate_clusters(build_neighbor_graph(bath.positions), 5)
    for k in range(2, 6):
        assert 2e3 < len(cl[k]) < 5e4  # "of order 1e4"


def test_cluster_file_roundtrip(tmp_path, small_bath):
    cl = enumerate_clusters(build_neighbor_graph(small_bath.positions), 3)
    p = tmp_path / "clusters.csv"
    save_clusters(cl, p)
    assert load_clusters(p) == cl
    (tmp_path / "x.csv").write_text("nope\n")
    with pytest.raises(ValueError):
        load_clusters(tmp_path / "x.csv")
