"""Minimal undirected simple-graph container shared by the overlap and metrics code."""
from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np


class Graph:
    """Undirected graph on ``nodes`` with edges stored as index pairs i < j.

    ``weight`` holds one float per edge (1.0 when the graph is unweighted) and
    ``affiliation`` one indicator per node (-1 when unknown).
    """

    def __init__(self, nodes: Sequence[str], edge_i, edge_j, weight=None, affiliation=None):
        self.nodes = list(nodes)
        ei = np.asarray(edge_i, dtype=np.int64)
        ej = np.asarray(edge_j, dtype=np.int64)
        if len(ei) != len(ej):
            raise ValueError("edge endpoint arrays differ in length")
        if len(ei) and (np.any(ei == ej)):
            raise ValueError("self-loops are not allowed")
        lo, hi = np.minimum(ei, ej), np.maximum(ei, ej)
        self.edge_i, self.edge_j = lo, hi
        self.weight = (np.ones(len(lo)) if weight is None
                       else np.asarray(weight, dtype=np.float64))
        self.affiliation = (np.full(len(self.nodes), -1, dtype=np.int8) if affiliation is None
                            else np.asarray(affiliation, dtype=np.int8))
        self._index = None

    @classmethod
    def from_edges(cls, edges: Iterable, nodes: Optional[Iterable[str]] = None,
                   affiliation: Optional[dict] = None) -> "Graph":
        """Build from (a, b) or (a, b, w) tuples; nodes default to edge endpoints, sorted."""
        edges = list(edges)
        names = set(nodes or ())
        for e in edges:
            names.update(e[:2])
        names = sorted(names)
        pos = {n: i for i, n in enumerate(names)}
        seen = {}
        for e in edges:
            a, b = pos[e[0]], pos[e[1]]
            key = (min(a, b), max(a, b))
            seen[key] = float(e[2]) if len(e) > 2 else 1.0
        keys = sorted(seen)
        aff = None if affiliation is None else [affiliation.get(n, -1) for n in names]
        return cls(names, [k[0] for k in keys], [k[1] for k in keys],
                   [seen[k] for k in keys], aff)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edge_i)

    def index(self, node) -> int:
        if self._index is None:
            self._index = {n: i for i, n in enumerate(self.nodes)}
        try:
            return self._index[node]
        except KeyError:
            raise KeyError(f"node {node!r} not in graph") from None

    def degrees(self) -> np.ndarray:
        return (np.bincount(self.edge_i, minlength=self.n_nodes)
                + np.bincount(self.edge_j, minlength=self.n_nodes))

    def adjacency_lists(self) -> list:
        """Sorted neighbour index lists, one per node."""
        adj = [[] for _ in range(self.n_nodes)]
        for a, b in zip(self.edge_i.tolist(), self.edge_j.tolist()):
            adj[a].append(b)
            adj[b].append(a)
        for lst in adj:
            lst.sort()
        return adj

    def edge_list(self) -> list:
        return [(self.nodes[a], self.nodes[b], w)
                for a, b, w in zip(self.edge_i.tolist(), self.edge_j.tolist(), self.weight.tolist())]

    def induced(self, keep: np.ndarray) -> "Graph":
        """Subgraph on nodes where ``keep`` is True, preserving node order."""
        keep = np.asarray(keep, dtype=bool)
        new = np.cumsum(keep) - 1
        ek = keep[self.edge_i] & keep[self.edge_j]
        return Graph([n for n, k in zip(self.nodes, keep) if k], new[self.edge_i[ek]],
                     new[self.edge_j[ek]], self.weight[ek], self.affiliation[keep])

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.n_nodes} nodes, {self.n_edges} edges)"
