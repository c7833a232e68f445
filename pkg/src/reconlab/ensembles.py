"""Random graph and tree ensembles, plus ball / boundary / residual decomposition.

Vertices are integers in ``[0, n)``. Edges are stored as an ``(M, 3)`` integer
array of ``(u, v, weight_id)`` rows with ``u <= v``, sorted lexicographically,
so two graphs with the same multiset of edges compare and serialize equally.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _canonical_edges(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 3)
    u = np.minimum(arr[:, 0], arr[:, 1])
    v = np.maximum(arr[:, 0], arr[:, 1])
    arr = np.column_stack([u, v, arr[:, 2]])
    order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0]))
    out = arr[order]
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Multigraph:
    """Undirected multigraph; parallel edges and self-loops are allowed."""

    n: int
    edges: np.ndarray

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("vertex count must be non-negative")
        edges = _canonical_edges(self.edges)
        if len(edges) and (edges[:, :2].min() < 0 or edges[:, :2].max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if len(edges) and edges[:, 2].min() < 0:
            raise ValueError("weight ids must be non-negative")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> "Multigraph":
        """Build from ``(u, v)`` or ``(u, v, weight_id)`` tuples."""
        rows = [tuple(e) if len(e) == 3 else (e[0], e[1], 0) for e in edges]
        return cls(n, np.array(rows, dtype=np.int64).reshape(-1, 3))

    def __eq__(self, other):
        if not isinstance(other, Multigraph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))

    @property
    def m(self) -> int:
        return len(self.edges)

    def with_weights(self, weight_ids) -> "Multigraph":
        """Same edges (in canonical order) with new weight ids."""
        w = np.asarray(weight_ids, dtype=np.int64)
        if w.shape != (self.m,):
            raise ValueError("need one weight id per edge")
        return Multigraph(self.n, np.column_stack([self.edges[:, :2], w]))

    def degrees(self) -> np.ndarray:
        """Degree counting multiplicity; a loop adds 2."""
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    @cached_property
    def neighbors(self) -> list[list[int]]:
        # loops never change distances
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v, _ in self.edges.tolist():
            if u != v:
                adj[u].append(v)
                adj[v].append(u)
        return adj

    def distances_from(self, r: int, cutoff: int | None = None) -> np.ndarray:
        """BFS distances from ``r``; unreachable (or beyond cutoff) vertices get -1."""
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[r] = 0
        queue = deque([r])
        adj = self.neighbors
        while queue:
            x = queue.popleft()
            d = dist[x]
            if cutoff is not None and d >= cutoff:
                continue
            for y in adj[x]:
                if dist[y] < 0:
                    dist[y] = d + 1
                    queue.append(y)
        return dist

    def to_text(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines += [f"{u} {v} {w}" for u, v, w in self.edges.tolist()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Multigraph":
        rows = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
        rows = [r for r in rows if r]
        if not rows:
            raise ValueError("empty graph file")
        n, m = (int(x) for x in rows[0])
        body = [tuple(int(x) for x in r) for r in rows[1:]]
        if len(body) != m:
            raise ValueError(f"header declares {m} edges, found {len(body)}")
        if any(len(r) != 3 for r in body):
            raise ValueError("edge lines must be 'u v weight_id'")
        return cls(n, np.array(body, dtype=np.int64).reshape(-1, 3))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Multigraph":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class Tree:
    """Rooted tree with nodes in breadth-first order; node 0 is the root.

    ``weight_id[i]`` is the table of the edge to ``parent[i]``; it is -1 at the root.
    """

    parent: np.ndarray
    depth: np.ndarray
    weight_id: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.parent, dtype=np.int64)
        d = np.asarray(self.depth, dtype=np.int64)
        w = np.asarray(self.weight_id, dtype=np.int64)
        if not (len(p) == len(d) == len(w)) or len(p) == 0:
            raise ValueError("tree needs at least one node and aligned arrays")
        if p[0] != -1 or d[0] != 0 or np.any(p[1:] < 0):
            raise ValueError("exactly one root, stored first")
        if np.any(p[1:] >= np.arange(1, len(p))):
            raise ValueError("nodes must be listed parents-first")
        if np.any(d[1:] != d[p[1:]] + 1):
            raise ValueError("depth(child) must equal depth(parent) + 1")
        for name, arr in (("parent", p), ("depth", d), ("weight_id", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    root = 0

    def __len__(self) -> int:
        return len(self.parent)

    @property
    def height(self) -> int:
        return int(self.depth.max())

    @cached_property
    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(len(self))]
        for i, p in enumerate(self.parent.tolist()):
            if p >= 0:
                kids[p].append(i)
        return kids

    def nodes_at_depth(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.depth == t)

    def to_text(self) -> str:
        lines = ["# node parent depth weight_id"]
        lines += [
            f"{i} {p} {d} {w}"
            for i, (p, d, w) in enumerate(
                zip(self.parent.tolist(), self.depth.tolist(), self.weight_id.tolist())
            )
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Tree":
        rows = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
        rows = sorted((tuple(int(x) for x in r) for r in rows if r), key=lambda r: r[0])
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ValueError("node ids must be 0..n-1")
        arr = np.array([r[1:] for r in rows], dtype=np.int64).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Tree":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class BallDecomposition:
    """Ball ``B(r,t)``, boundary ``D(r,t)`` and residual graph around a root.

    Edge fields hold indices into ``graph.edges``. An edge belongs to the ball
    iff one of its endpoints lies strictly inside (distance < t); every other
    edge, including those joining two boundary vertices, is residual.
    """

    root: int
    t: int
    distance: np.ndarray
    ball_edges: np.ndarray
    residual_edges: np.ndarray

    @cached_property
    def ball_vertices(self) -> frozenset[int]:
        d = self.distance
        return frozenset(np.flatnonzero((d >= 0) & (d <= self.t)).tolist())

    @cached_property
    def boundary(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.distance == self.t).tolist())

    @cached_property
    def interior(self) -> frozenset[int]:
        d = self.distance
        return frozenset(np.flatnonzero((d >= 0) & (d < self.t)).tolist())

    @cached_property
    def residual_vertices(self) -> frozenset[int]:
        d = self.distance
        return frozenset(np.flatnonzero((d < 0) | (d >= self.t)).tolist())


def _check_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_poisson_multigraph(n: int, gamma: float, rng, weight_p=None) -> Multigraph:
    """Poisson multigraph: pair multiplicities ~ Poisson(2*gamma/n), loops ~ Poisson(gamma/n).

    The total edge count is Poisson(gamma * n); given it, each edge picks an
    ordered pair of uniform endpoints, which splits the count over pairs and
    loops with exactly the required rates.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    rng = _check_rng(rng)
    m = rng.poisson(gamma * n)
    ends = rng.integers(0, n, size=(m, 2))
    w = _draw_weights(m, weight_p, rng)
    return Multigraph(n, np.column_stack([ends, w]))


def _draw_weights(m: int, weight_p, rng) -> np.ndarray:
    if weight_p is None:
        return np.zeros(m, dtype=np.int64)
    p = np.asarray(weight_p, dtype=float)
    return rng.choice(len(p), size=m, p=p / p.sum())


def configuration_matching(n_half: int, rng) -> np.ndarray:
    """Uniformly random perfect matching of half-edges ``0..n_half-1`` as (n_half/2, 2) pairs."""
    if n_half % 2:
        raise ValueError("odd number of half-edges")
    rng = _check_rng(rng)
    return rng.permutation(n_half).reshape(-1, 2)


def sample_regular_multigraph(n: int, k: int, rng, weight_p=None) -> Multigraph:
    """(k+1)-regular multigraph from the configuration model."""
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    if (n * (k + 1)) % 2:
        raise ValueError("n*(k+1) must be even")
    rng = _check_rng(rng)
    pairs = configuration_matching(n * (k + 1), rng) // (k + 1)
    w = _draw_weights(len(pairs), weight_p, rng)
    return Multigraph(n, np.column_stack([pairs, w]))


def sample_galton_watson_tree(gamma: float, depth: int, rng, weight_p=None) -> Tree:
    """Galton-Watson tree with Poisson(2*gamma) offspring, truncated at ``depth``."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    rng = _check_rng(rng)
    return _grow(lambda d, size: rng.poisson(2 * gamma, size=size), depth, weight_p, rng)


def regular_tree(k: int, depth: int, root_degree: int | None = None, weight_p=None, rng=None) -> Tree:
    """Tree where the root has ``root_degree`` (default k+1) children and others k."""
    if depth < 0 or k < 0:
        raise ValueError("need depth >= 0 and k >= 0")
    root_degree = k + 1 if root_degree is None else root_degree
    rng = _check_rng(rng) if weight_p is not None else None
    return _grow(lambda d, size: np.full(size, root_degree if d == 0 else k), depth, weight_p, rng)


def _grow(offspring, depth, weight_p, rng) -> Tree:
    parents = [np.array([-1])]
    depths = [np.array([0])]
    level = np.array([0])
    start = 1
    for d in range(depth):
        counts = np.asarray(offspring(d, len(level)), dtype=np.int64)
        kids = np.repeat(level, counts)
        if len(kids) == 0:
            break
        parents.append(kids)
        depths.append(np.full(len(kids), d + 1))
        level = np.arange(start, start + len(kids))
        start += len(kids)
    parent = np.concatenate(parents)
    n_edges = len(parent) - 1
    w = np.concatenate([[-1], _draw_weights(n_edges, weight_p, rng)]) if weight_p is not None \
        else np.concatenate([[-1], np.zeros(n_edges, dtype=np.int64)])
    return Tree(parent, np.concatenate(depths), w)


def ball_decompose(g: Multigraph, r: int, t: int) -> BallDecomposition:
    if not 0 <= r < g.n:
        raise ValueError("root out of range")
    if t < 0:
        raise ValueError("radius must be >= 0")
    dist = g.distances_from(r, cutoff=t)
    if len(g.edges):
        du = dist[g.edges[:, 0]]
        dv = dist[g.edges[:, 1]]
        inner = ((du >= 0) & (du < t)) | ((dv >= 0) & (dv < t))
    else:
        inner = np.zeros(0, dtype=bool)
    dist.setflags(write=False)
    return BallDecomposition(r, t, dist, np.flatnonzero(inner), np.flatnonzero(~inner))


def local_tree_check(g: Multigraph, r: int, t: int) -> bool:
    """True iff the ball edges of ``B(r,t)`` form a tree (no loops, multi-edges or cycles)."""
    dec = ball_decompose(g, r, t)
    # the ball is connected through its own edges, so counting edges suffices
    return len(dec.ball_edges) == len(dec.ball_vertices) - 1


def ball_to_tree(g: Multigraph, dec: BallDecomposition) -> tuple[Tree, np.ndarray]:
    """Relabel a tree-like ball as a :class:`Tree`, siblings in increasing vertex label.

    Returns the tree and the array mapping tree node -> graph vertex.
    """
    child_edges: dict[int, list[tuple[int, int]]] = {}
    for idx in dec.ball_edges.tolist():
        u, v, w = g.edges[idx].tolist()
        if u == v:
            raise ValueError("ball is not a tree")
        a, b = (u, v) if dec.distance[u] < dec.distance[v] else (v, u)
        if dec.distance[b] != dec.distance[a] + 1:
            raise ValueError("ball is not a tree")
        child_edges.setdefault(a, []).append((b, w))
    vertices = [dec.root]
    parent, depth, wid = [-1], [0], [-1]
    seen = {dec.root}
    i = 0
    while i < len(vertices):
        x = vertices[i]
        for y, w in sorted(child_edges.get(x, [])):
            if y in seen:
                raise ValueError("ball is not a tree")
            seen.add(y)
            vertices.append(y)
            parent.append(i)
            depth.append(depth[i] + 1)
            wid.append(w)
        i += 1
    if len(vertices) != len(dec.ball_vertices):
        raise ValueError("ball is not a tree")
    return Tree(np.array(parent), np.array(depth), np.array(wid)), np.array(vertices)


def tree_shape(tree: Tree, depth: int | None = None) -> tuple[int, ...]:
    """Depth-first child-count code of the ordered tree cut at ``depth``.

    Nodes at the cut depth contribute nothing (their children are not observed).
    Two trees have equal codes iff they are the same ordered tree up to ``depth``.
    """
    depth = tree.height if depth is None else depth
    code: list[int] = []
    stack = [0]
    kids = tree.children
    while stack:
        x = stack.pop()
        if tree.depth[x] >= depth:
            continue
        code.append(len(kids[x]))
        stack.extend(reversed(kids[x]))
    return tuple(code)
