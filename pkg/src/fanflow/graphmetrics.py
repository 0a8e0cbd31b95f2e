"""Graph- and node-level metrics on overlap graphs (all on the unweighted simple graph
except weighted degree)."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .graph import Graph
from .ingest import AGENCY, INDEPENDENT, SEGMENT_NAMES
from .overlap import segment_subgraph
from .panel import segment_code


@dataclass
class GraphMetricsRow:
    month: Optional[str]
    segment: Optional[str]
    n_nodes: int
    n_edges: int
    density: float
    avg_degree: float
    clustering: float
    clustering_deg2: float
    lcc: int
    degenerate: bool

    def as_dict(self) -> dict:
        return asdict(self)


def _adjacency(graph: Graph) -> sp.csr_matrix:
    n = graph.n_nodes
    rows = np.concatenate([graph.edge_i, graph.edge_j])
    cols = np.concatenate([graph.edge_j, graph.edge_i])
    return sp.csr_matrix((np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(n, n))


def triangles(graph: Graph) -> np.ndarray:
    """Number of triangles through each node."""
    if graph.n_edges == 0:
        return np.zeros(graph.n_nodes, dtype=np.int64)
    a = _adjacency(graph)
    return np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() // 2


def clustering_coefficients(graph: Graph) -> np.ndarray:
    """Local clustering 2T/(d(d-1)) per node, 0 where degree < 2."""
    deg = graph.degrees()
    tri = triangles(graph)
    denom = deg * (deg - 1)
    return np.divide(2 * tri, denom, out=np.zeros(graph.n_nodes), where=denom > 0)


def local_clustering(graph: Graph, node) -> float:
    return float(clustering_coefficients(graph)[graph.index(node)])


def largest_component(graph: Graph) -> int:
    if graph.n_nodes == 0:
        return 0
    _, labels = connected_components(_adjacency(graph), directed=False)
    return int(np.bincount(labels).max())


def _mean(values: np.ndarray) -> float:
    # correctly rounded sum, so the mean does not depend on node order
    return math.fsum(values.tolist()) / len(values) if len(values) else 0.0


def graph_metrics(graph: Graph, month=None, segment=None) -> GraphMetricsRow:
    """Size, density, average degree, mean clustering and largest component.

    ``clustering`` averages over all nodes (degree < 2 counted as 0);
    ``clustering_deg2`` averages over nodes of degree >= 2 only. Graphs with
    fewer than two nodes get density and average degree 0 and ``degenerate``.
    """
    n, e = graph.n_nodes, graph.n_edges
    degenerate = n < 2
    cc = clustering_coefficients(graph)
    deg = graph.degrees()
    return GraphMetricsRow(
        month=None if month is None else str(month),
        segment=segment,
        n_nodes=n,
        n_edges=e,
        density=0.0 if degenerate else 2 * e / (n * (n - 1)),
        avg_degree=0.0 if degenerate else 2 * e / n,
        clustering=_mean(cc),
        clustering_deg2=_mean(cc[deg >= 2]),
        lcc=largest_component(graph),
        degenerate=degenerate,
    )


def betweenness(graph: Graph, normalized: bool = False) -> dict:
    """Shortest-path betweenness (unweighted), each unordered pair counted once.

    Single-source BFS with dependency accumulation, sources taken in node
    order. ``normalized`` divides by (n-1)(n-2)/2.
    """
    n = graph.n_nodes
    adj = graph.adjacency_lists()
    bc = [0.0] * n
    for s in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s], dist[s] = 1, 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                bc[w] += delta[w]
    scale = 0.5
    if normalized:
        scale = 1.0 / ((n - 1) * (n - 2)) if n > 2 else 0.0
    return {graph.nodes[i]: bc[i] * scale for i in range(n)}


def weighted_degree(graph: Graph, node) -> float:
    i = graph.index(node)
    mask = (graph.edge_i == i) | (graph.edge_j == i)
    return float(graph.weight[mask].sum())


def weighted_degrees(graph: Graph) -> np.ndarray:
    return (np.bincount(graph.edge_i, weights=graph.weight, minlength=graph.n_nodes)
            + np.bincount(graph.edge_j, weights=graph.weight, minlength=graph.n_nodes))


def node_metrics(graph: Graph) -> pd.DataFrame:
    """Per-node weighted degree, degree, local clustering and betweenness."""
    bc = betweenness(graph)
    n = graph.n_nodes
    norm = 2.0 / ((n - 1) * (n - 2)) if n > 2 else 0.0
    return pd.DataFrame({
        "channel": graph.nodes,
        "affiliation": [SEGMENT_NAMES.get(int(a), "") for a in graph.affiliation],
        "weighted_degree": weighted_degrees(graph),
        "degree": graph.degrees(),
        "clustering": clustering_coefficients(graph),
        "betweenness": [bc[v] for v in graph.nodes],
        "betweenness_normalized": [bc[v] * norm for v in graph.nodes],
    })


def metrics_timeseries(graphs: Sequence[Graph], segments=(AGENCY, INDEPENDENT)) -> pd.DataFrame:
    """One row per (month, segment) on the segment's induced subgraph.

    Months where a segment has no qualifying node still get a row, with
    ``empty`` set, so that pairing by month stays explicit.
    """
    rows = []
    for g in graphs:
        for seg in segments:
            s = segment_code(seg)
            sub = segment_subgraph(g, s)
            row = graph_metrics(sub, month=getattr(g, "month", None), segment=SEGMENT_NAMES[s]).as_dict()
            row["empty"] = sub.n_nodes == 0
            rows.append(row)
    return pd.DataFrame(rows)
