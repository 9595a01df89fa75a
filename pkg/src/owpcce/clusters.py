"""Neighbor graph under a distance cutoff and connected-cluster enumeration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .constants import SI_LATTICE_CONSTANT

# 3rd shell of the diamond lattice, sqrt(11) a0 / 4
DEFAULT_CUTOFF = math.sqrt(11) * SI_LATTICE_CONSTANT / 4
K_MAX_LIMIT = 5
_BOUNDARY_RTOL = 1e-9


@dataclass(frozen=True)
class NeighborGraph:
    n: int
    edges: np.ndarray  # (m, 2) int, i < j, lexicographic
    neighbors: tuple[frozenset, ...]
    cutoff: float

    def adjacent(self, a: int, b: int) -> bool:
        return b in self.neighbors[a]


def build_neighbor_graph(positions, cutoff: float = DEFAULT_CUTOFF) -> NeighborGraph:
    """Undirected graph with an edge iff |r_a - r_b| <= cutoff.

    The boundary is inclusive; separations within a relative 1e-9 of the
    cutoff count as equal to it (lattice distances are exact multiples of a0/4
    but are not exactly representable).
    """
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    pos = np.asarray(getattr(positions, "positions", positions), dtype=float)
    n = len(pos)
    if n < 2:
        edges = np.zeros((0, 2), dtype=int)
    else:
        pairs = cKDTree(pos).query_pairs(cutoff * (1 + _BOUNDARY_RTOL), output_type="ndarray")
        edges = np.sort(pairs, axis=1) if len(pairs) else np.zeros((0, 2), dtype=int)
        if len(edges):
            edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    nb: list[set] = [set() for _ in range(n)]
    for a, b in edges:
        nb[a].add(int(b))
        nb[b].add(int(a))
    return NeighborGraph(n, edges.astype(int), tuple(frozenset(s) for s in nb), cutoff)


def enumerate_clusters(graph: NeighborGraph, k_max: int) -> dict[int, list[tuple[int, ...]]]:
    """Connected clusters of sizes 2..k_max as sorted index tuples.

    Size-2 clusters are the graph edges; a size-(k+1) cluster is any size-k
    cluster plus a spin adjacent to at least one of its members.  Each list is
    in lexicographic order.
    """
    if not 2 <= k_max <= K_MAX_LIMIT:
        raise ValueError(f"k_max must lie in [2, {K_MAX_LIMIT}], got {k_max}")
    out: dict[int, list[tuple[int, ...]]] = {2: [tuple(map(int, e)) for e in graph.edges]}
    for k in range(2, k_max):
        grown: set[tuple[int, ...]] = set()
        for c in out[k]:
            members = set(c)
            frontier = set().union(*(graph.neighbors[i] for i in c)) - members
            for v in frontier:
                grown.add(tuple(sorted(members | {v})))
        out[k + 1] = sorted(grown)
    return out


def is_connected(graph: NeighborGraph, cluster) -> bool:
    members = set(cluster)
    start = next(iter(members))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in graph.neighbors[v] & members:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen == members


def save_clusters(clusters: dict[int, list[tuple[int, ...]]], path: str | Path) -> None:
    """CSV: size, then member bath indices."""
    lines = ["size,members"]
    for k in sorted(clusters):
        for c in clusters[k]:
            lines.append(f"{k}," + " ".join(map(str, c)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_clusters(path: str | Path) -> dict[int, list[tuple[int, ...]]]:
    out: dict[int, list[tuple[int, ...]]] = {}
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != "size,members":
        raise ValueError(f"{path}: not a cluster file")
    for ln in rows[1:]:
        if not ln:
            continue
        k, members = ln.split(",", 1)
        out.setdefault(int(k), []).append(tuple(int(x) for x in members.split()))
    return out
