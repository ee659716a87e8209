"""Temporal graph data model, structural matrices and the JSONL format.

Node ids are arbitrary integers that stay stable across a temporal graph; the
position of an id in ``GraphSnapshot.nodes`` is its row in every matrix built
from that snapshot. Matrices are plain ``float64`` numpy arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import GraphError, ShapeError


def _optional_array(a, ndim):
    if a is None:
        return None
    a = np.array(a, dtype=np.float64)
    if a.ndim == 1 and ndim == 2:
        a = a[:, None]
    if a.ndim != ndim:
        raise GraphError(f"expected a {ndim}-D feature array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    t: float
    nodes: tuple
    edges: tuple
    x: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    directed: bool = False
    y: Optional[tuple] = None
    z: Optional[tuple] = None
    g: Optional[int] = None
    _index: dict = field(init=False, repr=False)
    _edge_row: dict = field(init=False, repr=False)

    def __post_init__(self):
        nodes = tuple(int(v) for v in self.nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node ids")
        index = {v: i for i, v in enumerate(nodes)}
        edges, edge_row = [], {}
        for e in self.edges:
            u, v = (int(e[0]), int(e[1]))
            if u not in index or v not in index:
                raise GraphError(f"edge ({u}, {v}) has an endpoint outside the node set")
            if not self.directed and u > v:
                u, v = v, u
            if (u, v) in edge_row:
                raise GraphError(f"duplicate edge ({u}, {v}); multigraphs are not supported")
            edge_row[(u, v)] = len(edges)
            edges.append((u, v))
        x = _optional_array(self.x, 2)
        w = _optional_array(self.w, 2)
        if x is not None and x.shape[0] != len(nodes):
            raise GraphError(f"x has {x.shape[0]} rows for {len(nodes)} nodes")
        if w is not None and w.shape[0] != len(edges):
            raise GraphError(f"w has {w.shape[0]} rows for {len(edges)} edges")
        if self.y is not None and len(self.y) != len(nodes):
            raise GraphError("y must have one label per node")
        if self.z is not None and len(self.z) != len(edges):
            raise GraphError("z must have one label per edge")
        set_ = object.__setattr__
        set_(self, "t", float(self.t))
        set_(self, "nodes", nodes)
        set_(self, "edges", tuple(edges))
        set_(self, "x", x)
        set_(self, "w", w)
        set_(self, "directed", bool(self.directed))
        set_(self, "y", None if self.y is None else tuple(int(c) for c in self.y))
        set_(self, "z", None if self.z is None else tuple(int(c) for c in self.z))
        set_(self, "g", None if self.g is None else int(self.g))
        set_(self, "_index", index)
        set_(self, "_edge_row", edge_row)

    @property
    def n(self):
        return len(self.nodes)

    def index(self, v):
        try:
            return self._index[int(v)]
        except KeyError:
            raise GraphError(f"unknown node id {v}") from None

    def edge_row(self, u, v):
        """Row of edge (u, v) in ``w``; the edge-feature index map."""
        key = (int(u), int(v))
        if not self.directed and key[0] > key[1]:
            key = key[::-1]
        return self._edge_row[key]

    def has_edge(self, u, v):
        try:
            self.edge_row(u, v)
        except KeyError:
            return False
        return True

    def __eq__(self, other):
        if not isinstance(other, GraphSnapshot):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and np.array_equal(a, b)

        return (self.t == other.t and self.nodes == other.nodes and self.edges == other.edges
                and self.directed == other.directed and same(self.x, other.x)
                and same(self.w, other.w) and self.y == other.y and self.z == other.z
                and self.g == other.g)

    __hash__ = None

    def to_dict(self):
        d = {"t": self.t, "nodes": list(self.nodes), "edges": [list(e) for e in self.edges]}
        if self.x is not None:
            d["x"] = self.x.tolist()
        if self.w is not None:
            d["w"] = self.w.tolist()
        if self.y is not None:
            d["y"] = list(self.y)
        if self.z is not None:
            d["z"] = list(self.z)
        if self.g is not None:
            d["g"] = self.g
        d["directed"] = self.directed
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"t", "nodes", "edges", "x", "w", "y", "z", "g", "directed"}
        if unknown:
            raise GraphError(f"unknown snapshot fields {sorted(unknown)}")
        try:
            return cls(t=d["t"], nodes=d["nodes"], edges=d["edges"], x=d.get("x"),
                       w=d.get("w"), directed=d.get("directed", False), y=d.get("y"),
                       z=d.get("z"), g=d.get("g"))
        except KeyError as exc:
            raise GraphError(f"snapshot missing field {exc}") from None


class TemporalGraph:
    """A chain of snapshots with strictly increasing timestamps."""

    def __init__(self, snapshots: Sequence[GraphSnapshot], meta=None):
        snaps = tuple(snapshots)
        for a, b in zip(snaps, snaps[1:]):
            if not a.t < b.t:
                raise GraphError(f"timestamps must be strictly increasing ({a.t} then {b.t})")
        self.snapshots = snaps
        # generator-side annotations (e.g. planted communities); not serialized
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return TemporalGraph(self.snapshots[i], self.meta)
        return self.snapshots[i]

    def __iter__(self):
        return iter(self.snapshots)

    def __eq__(self, other):
        if not isinstance(other, TemporalGraph):
            return NotImplemented
        return self.snapshots == other.snapshots

    __hash__ = None

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    def node_ids(self):
        """Sorted union of node ids over all snapshots (the global id map)."""
        return sorted(set().union(*(s.nodes for s in self.snapshots))) if self.snapshots else []

    def labels(self, kind):
        return [getattr(s, kind) for s in self.snapshots]


# ---------------------------------------------------------------- matrices

def adjacency(g: GraphSnapshot, weighted=False, weight_channel=0, order=None):
    """Adjacency matrix, rows and columns in ``g.nodes`` order (or ``order``).

    Weighted entries come from column ``weight_channel`` of ``g.w``.
    """
    if weighted:
        if g.w is None:
            raise GraphError("weighted adjacency requested but the snapshot has no edge features")
        if not 0 <= weight_channel < g.w.shape[1]:
            raise GraphError(f"weight_channel {weight_channel} out of range for c={g.w.shape[1]}")
    if order is None:
        pos = g._index
        n = g.n
    else:
        pos = {int(v): i for i, v in enumerate(order)}
        n = len(pos)
    A = np.zeros((n, n))
    for r, (u, v) in enumerate(g.edges):
        val = g.w[r, weight_channel] if weighted else 1.0
        A[pos[u], pos[v]] = val
        if not g.directed:
            A[pos[v], pos[u]] = val
    return A


def _square(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {A.shape}")
    return A


def degrees(A):
    return _square(A).sum(axis=0)


def degree_matrix(A):
    """D = diag(1^T A): column sums on the diagonal."""
    return np.diag(degrees(A))


def laplacian(A):
    A = _square(A)
    return degree_matrix(A) - A


def inv_sqrt_degrees(A):
    """D^{-1/2} as a vector; zero-degree entries map to 0."""
    d = degrees(A)
    if np.any(d < 0):
        raise GraphError("negative degree; normalized operators need nonnegative weights")
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return out


def normalized_laplacian(A):
    """D^{-1/2} (D - A) D^{-1/2}; isolated nodes get all-zero rows/columns."""
    A = _square(A)
    s = inv_sqrt_degrees(A)
    return s[:, None] * laplacian(A) * s[None, :]


def sym_normalized_adjacency(A):
    """D^{-1/2} A D^{-1/2} with the same isolated-node convention."""
    A = _square(A)
    s = inv_sqrt_degrees(A)
    return s[:, None] * A * s[None, :]


def transition_matrix(A):
    """D^{-1} A using row sums (out-degree); zero-degree rows stay zero."""
    A = _square(A)
    d = A.sum(axis=1)
    out = np.zeros_like(A)
    pos = d != 0
    out[pos] = A[pos] / d[pos, None]
    return out


# ---------------------------------------------------------------- neighborhoods

def k_hop_neighbors(g: GraphSnapshot, v, k):
    """{u : (A^k)[u, v] > 0}, i.e. nodes with a length-k walk to ``v``.

    This follows the definition literally, so ``v`` itself is a 2-hop
    neighbour of any node with an edge.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    j = g.index(v)
    A = adjacency(g) > 0
    reach = np.zeros(g.n, dtype=bool)
    reach[j] = True
    for _ in range(k):
        reach = (A.astype(np.int64) @ reach.astype(np.int64)) > 0
    return {g.nodes[i] for i in np.flatnonzero(reach)}


def neighbors(g: GraphSnapshot, v):
    return k_hop_neighbors(g, v, 1)


def sample_neighbors(g: GraphSnapshot, v, q, seed=None):
    """At most ``q`` one-hop neighbours of ``v`` drawn without replacement."""
    if q < 1:
        raise ValueError("q must be at least 1")
    nb = sorted(neighbors(g, v))
    if len(nb) <= q:
        return set(nb)
    rng = np.random.default_rng(seed)
    return {nb[i] for i in rng.choice(len(nb), size=q, replace=False)}


def sampled_adjacency(A, q, seed=None):
    """Copy of ``A`` keeping at most ``q`` nonzeros per row (row = receiving node)."""
    A = _square(A)
    rng = np.random.default_rng(seed)
    out = np.zeros_like(A)
    for v in range(A.shape[0]):
        nb = np.flatnonzero(A[v])
        if len(nb) > q:
            nb = np.sort(rng.choice(nb, size=q, replace=False))
        out[v, nb] = A[v, nb]
    return out


# ---------------------------------------------------------------- alignment

def align(snapshots, ids=None, weighted=False):
    """Stack a window of snapshots onto one global node order.

    Nodes absent from a snapshot get zero features and no edges. Returns
    ``(ids, A, X)`` where ``A`` is (T, n, n) and ``X`` is (T, n, d).
    """
    if ids is None:
        ids = sorted(set().union(*(s.nodes for s in snapshots)))
    pos = {v: i for i, v in enumerate(ids)}
    d = max((s.x.shape[1] for s in snapshots if s.x is not None), default=1)
    As, Xs = [], []
    for s in snapshots:
        if any(v not in pos for v in s.nodes):
            raise GraphError("snapshot contains nodes outside the alignment id set")
        As.append(adjacency(s, weighted=weighted, order=ids))
        X = np.zeros((len(ids), d))
        if s.x is not None:
            if s.x.shape[1] != d:
                raise GraphError("feature width changes across the window")
            X[[pos[v] for v in s.nodes]] = s.x
        Xs.append(X)
    return list(ids), np.stack(As), np.stack(Xs)


# ---------------------------------------------------------------- wire format

def dumps_jsonl(tg: TemporalGraph) -> str:
    return "".join(json.dumps(s.to_dict(), separators=(",", ":")) + "\n" for s in tg)


def loads_jsonl(text: str) -> TemporalGraph:
    snaps = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(d, dict):
            raise GraphError(f"line {lineno}: expected a JSON object")
        snaps.append(GraphSnapshot.from_dict(d))
    return TemporalGraph(snaps)


def write_jsonl(tg: TemporalGraph, path):
    Path(path).write_text(dumps_jsonl(tg))


def read_jsonl(path) -> TemporalGraph:
    return loads_jsonl(Path(path).read_text())
