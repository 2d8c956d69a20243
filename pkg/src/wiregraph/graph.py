"""Undirected graphs, task-label oracles and the experiment graph generators."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rng import Rng

__all__ = [
    "Graph",
    "InvalidGraphError",
    "laplacian",
    "adjacency",
    "connected_components",
    "largest_monochromatic_subgraph",
    "shortest_path_distance",
    "gen_grid_deleted",
    "gen_watts_strogatz",
    "gen_knn_graph",
    "grid_graph",
    "path_graph",
]


class InvalidGraphError(ValueError):
    """Raised for malformed graphs or task inputs the graph cannot serve."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph stored as a sorted edge list plus CSR adjacency.

    Attributes
    ----------
    n : int
        Number of nodes.
    edges : ndarray, shape (E, 2)
        Unordered edges with ``i < j``, sorted lexicographically.
    colors : ndarray of int, shape (n,), optional
    points : ndarray, shape (n, 3), optional
    """

    n: int
    edges: np.ndarray
    colors: np.ndarray | None = None
    points: np.ndarray | None = None
    indptr: np.ndarray = field(init=False, repr=False)
    indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidGraphError("graph needs at least one node")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise InvalidGraphError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise InvalidGraphError("self-loops are not allowed")
        e = np.sort(e, axis=1)
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
        if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise InvalidGraphError("duplicate edge")
        e.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", e)

        if self.colors is not None:
            c = np.asarray(self.colors, dtype=np.int64)
            if c.shape != (self.n,):
                raise InvalidGraphError("colors must have one entry per node")
            c.setflags(write=False)
            object.__setattr__(self, "colors", c)
        if self.points is not None:
            p = np.asarray(self.points, dtype=np.float64)
            if p.ndim != 2 or p.shape[0] != self.n:
                raise InvalidGraphError("points must have one row per node")
            p.setflags(write=False)
            object.__setattr__(self, "points", p)

        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        indices = dst[order]
        indptr.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}

    def relabel(self, perm: Sequence[int]) -> Graph:
        """Node ``i`` of ``self`` becomes node ``perm[i]`` of the result."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(self.n)
        colors = None if self.colors is None else self.colors[inv]
        points = None if self.points is None else self.points[inv]
        return Graph(self.n, perm[self.edges], colors, points)

    def with_colors(self, colors) -> Graph:
        return Graph(self.n, self.edges, colors, self.points)

    def to_dict(self) -> dict:
        out = {"n": self.n, "edges": self.edges.tolist()}
        if self.colors is not None:
            out["colors"] = self.colors.tolist()
        if self.points is not None:
            out["points"] = self.points.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> Graph:
        return cls(d["n"], np.asarray(d.get("edges", []), dtype=np.int64).reshape(-1, 2),
                   d.get("colors"), d.get("points"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> Graph:
        return cls.from_dict(json.loads(s))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and np.array_equal(self.edges, other.edges)
                and _opt_equal(self.colors, other.colors)
                and _opt_equal(self.points, other.points))

    __hash__ = None


def _opt_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


def adjacency(g: Graph) -> np.ndarray:
    A = np.zeros((g.n, g.n))
    if g.n_edges:
        A[g.edges[:, 0], g.edges[:, 1]] = 1.0
        A[g.edges[:, 1], g.edges[:, 0]] = 1.0
    return A


def laplacian(g: Graph, normalized: bool = False) -> np.ndarray:
    """Dense graph Laplacian ``D - A``, or ``D^-1/2 (D - A) D^-1/2``.

    In the normalized case degree-0 nodes get an all-zero row and column.
    """
    A = adjacency(g)
    deg = A.sum(axis=1)
    L = np.diag(deg) - A
    if not normalized:
        return L
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return inv_sqrt[:, None] * L * inv_sqrt[None, :]


def connected_components(g: Graph) -> np.ndarray:
    """Component label per node, labels numbered by smallest member."""
    labels = -np.ones(g.n, dtype=np.int64)
    comp = 0
    for s in range(g.n):
        if labels[s] >= 0:
            continue
        labels[s] = comp
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if labels[v] < 0:
                    labels[v] = comp
                    queue.append(v)
        comp += 1
    return labels


def largest_monochromatic_subgraph(g: Graph) -> int:
    """Node count of the largest connected same-colour component."""
    if g.colors is None:
        raise InvalidGraphError("monochromatic subgraph task needs node colours")
    parent = list(range(g.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in g.edges:
        if g.colors[a] == g.colors[b]:
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = [find(i) for i in range(g.n)]
    return int(np.bincount(roots).max())


def shortest_path_distance(g: Graph, source: int, target: int) -> int | None:
    """BFS hop count from ``source`` to ``target``; ``None`` when unreachable."""
    for x in (source, target):
        if not 0 <= x < g.n:
            raise IndexError(f"node {x} out of range for graph with {g.n} nodes")
    if source == target:
        return 0
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            v = int(v)
            if v not in dist:
                if v == target:
                    return dist[u] + 1
                dist[v] = dist[u] + 1
                queue.append(v)
    return None


def grid_graph(rows: int, cols: int) -> Graph:
    """Node ``r * cols + c`` sits at row ``r``, column ``c``."""
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return Graph(rows * cols, np.concatenate([horiz, vert]))


def path_graph(n: int) -> Graph:
    return Graph(n, np.stack([np.arange(n - 1), np.arange(1, n)], axis=1))


def gen_grid_deleted(rows: int, cols: int, n_delete: int, rng: Rng) -> Graph:
    """Full ``rows x cols`` grid with ``n_delete`` uniformly chosen edges removed."""
    full = grid_graph(rows, cols)
    if not 0 <= n_delete <= full.n_edges:
        raise ValueError(f"cannot delete {n_delete} of {full.n_edges} grid edges")
    drop = rng.choice(full.n_edges, size=n_delete, replace=False)
    keep = np.ones(full.n_edges, dtype=bool)
    keep[drop] = False
    return Graph(full.n, full.edges[keep])


def gen_watts_strogatz(n: int, k: int, p: float, rng: Rng) -> Graph:
    """Watts-Strogatz small world: ring of ``k`` nearest neighbours, then rewiring.

    Lattice edges ``(u, u + j)`` are visited for ``j = 1..k/2`` and ``u = 0..n-1``;
    each one is rewired with probability ``p`` to ``(u, w)`` with ``w`` uniform over
    nodes that are neither ``u`` nor already adjacent to ``u``.
    """
    if k % 2 or not 0 < k < n:
        raise ValueError("need even k with 0 < k < n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("rewiring probability must lie in [0, 1]")
    adj = [set() for _ in range(n)]
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            if rng.random() >= p or v not in adj[u]:
                continue
            eligible = [w for w in range(n) if w != u and w not in adj[u]]
            if not eligible:
                continue
            w = eligible[int(rng.integers(len(eligible)))]
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(w)
            adj[w].add(u)
    edges = [(u, v) for u in range(n) for v in adj[u] if u < v]
    return Graph(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2))


def gen_knn_graph(points, k: int) -> Graph:
    """Symmetrized k-nearest-neighbour graph; distance ties go to the lower index."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be an (N, dim) array")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain NaN or infinite coordinates")
    n = len(pts)
    if not 0 < k < n:
        raise ValueError("need 0 < k < N")
    edges = set()
    cols = np.arange(n)
    for i in range(n):
        diff = pts - pts[i]
        dist = np.einsum("ij,ij->i", diff, diff)
        dist[i] = np.inf
        order = np.lexsort((cols, dist))[:k]
        for j in order:
            a, b = (i, int(j)) if i < j else (int(j), i)
            edges.add((a, b))
    return Graph(n, np.asarray(sorted(edges), dtype=np.int64).reshape(-1, 2), points=pts)
