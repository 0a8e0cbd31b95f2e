"""Monthly creator-creator audience-overlap graphs and their pooled aggregate.

Shared-viewer counts come from a sparse fan x creator incidence product,
which touches only co-chatting pairs. Nodes are ordered by channel token and
edges by (i, j) node position, so output never depends on ingest order.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .errors import ConfigError, UndefinedInputError
from .graph import Graph
from .ingest import SEGMENT_NAMES
from .months import MonthKey
from .panel import FanMonthPanel, segment_code


@dataclass(frozen=True)
class OverlapConfig:
    theta: float = 0.05
    n_min: int = 10
    tau_u: int = 25

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError(f"theta must lie in (0, 1], got {self.theta}")
        if int(self.n_min) != self.n_min or self.n_min < 1:
            raise ConfigError(f"n_min must be an integer >= 1, got {self.n_min}")
        if int(self.tau_u) != self.tau_u or self.tau_u < 1:
            raise ConfigError(f"tau_u must be an integer >= 1, got {self.tau_u}")


def simpson(a: Iterable, b: Iterable) -> float:
    """|A & B| / min(|A|, |B|)."""
    a, b = set(a), set(b)
    if not a or not b:
        raise UndefinedInputError("Simpson coefficient is undefined for an empty set")
    return len(a & b) / min(len(a), len(b))


class MonthlyGraph(Graph):
    """Overlap graph for one month.

    Besides the retained edges it keeps every co-chatted node pair
    (``pair_*`` arrays) so that unthresholded aggregates can be formed.
    """

    def __init__(self, month: MonthKey, nodes, audience, affiliation, pair_i, pair_j,
                 pair_shared, pair_simpson, retained, config: OverlapConfig):
        pair_i = np.asarray(pair_i, dtype=np.int64)
        pair_j = np.asarray(pair_j, dtype=np.int64)
        retained = np.asarray(retained, dtype=bool)
        super().__init__(nodes, pair_i[retained], pair_j[retained],
                         np.asarray(pair_simpson)[retained], affiliation)
        self.month = month
        self.audience = np.asarray(audience, dtype=np.int64)
        self.pair_i, self.pair_j = pair_i, pair_j
        self.pair_shared = np.asarray(pair_shared, dtype=np.int64)
        self.pair_simpson = np.asarray(pair_simpson, dtype=np.float64)
        self.retained = retained
        self.shared = self.pair_shared[retained]
        self.config = config

    def induced(self, keep) -> "MonthlyGraph":
        keep = np.asarray(keep, dtype=bool)
        new = np.cumsum(keep) - 1
        pk = keep[self.pair_i] & keep[self.pair_j]
        return MonthlyGraph(self.month, [n for n, k in zip(self.nodes, keep) if k],
                            self.audience[keep], self.affiliation[keep],
                            new[self.pair_i[pk]], new[self.pair_j[pk]], self.pair_shared[pk],
                            self.pair_simpson[pk], self.retained[pk], self.config)

    def edge_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "month": str(self.month),
            "i": [self.nodes[k] for k in self.edge_i],
            "j": [self.nodes[k] for k in self.edge_j],
            "shared": self.shared,
            "simpson": self.weight,
        }, columns=["month", "i", "j", "shared", "simpson"])

    def node_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "channel": self.nodes,
            "month": str(self.month),
            "audience_size": self.audience,
            "affiliation": [SEGMENT_NAMES.get(int(a), "") for a in self.affiliation],
        }, columns=["channel", "month", "audience_size", "affiliation"])


def audience_sets(panel: FanMonthPanel, month) -> dict:
    """Channel token -> frozenset of user tokens who chatted there in ``month``."""
    m = panel.month_index(month)
    if m is None:
        raise KeyError(f"{month} outside window {panel.window}")
    rows = panel.month == m
    out: dict = {}
    for u, c in zip(panel.user[rows].tolist(), panel.channel[rows].tolist()):
        out.setdefault(panel.channel_tokens[c], set()).add(panel.user_tokens[u])
    return {k: frozenset(v) for k, v in sorted(out.items())}


def build_month_graph(panel: FanMonthPanel, month, config: Optional[OverlapConfig] = None
                      ) -> MonthlyGraph:
    """Overlap graph for ``month``.

    Nodes are creators with at least ``tau_u`` unique chatters; an edge (i, j)
    is retained when Simpson >= theta and the shared audience >= n_min.
    """
    config = config or OverlapConfig()
    m = panel.month_index(month)
    if m is None:
        raise KeyError(f"{month} outside window {panel.window}")
    rows = panel.month == m
    users, chans = panel.user[rows], panel.channel[rows]
    size = np.bincount(chans, minlength=panel.n_channels)
    qualifies = size >= config.tau_u
    node_ids = np.flatnonzero(qualifies)
    node_ids = node_ids[np.argsort([panel.channel_tokens[c] for c in node_ids], kind="stable")]
    pos = np.full(panel.n_channels, -1, dtype=np.int64)
    pos[node_ids] = np.arange(len(node_ids))
    nodes = [panel.channel_tokens[c] for c in node_ids]
    audience = size[node_ids]

    keep = qualifies[chans]
    users, cols = users[keep], pos[chans[keep]]
    if len(users) and len(node_ids) > 1:
        _, urow = np.unique(users, return_inverse=True)
        inc = sp.csr_matrix((np.ones(len(urow), dtype=np.int64), (urow, cols)),
                            shape=(int(urow.max()) + 1, len(node_ids)))
        co = sp.triu(inc.T @ inc, k=1).tocoo()
        order = np.lexsort((co.col, co.row))
        pi, pj, shared = co.row[order].astype(np.int64), co.col[order].astype(np.int64), \
            co.data[order].astype(np.int64)
        nz = shared > 0
        pi, pj, shared = pi[nz], pj[nz], shared[nz]
    else:
        pi = pj = shared = np.zeros(0, dtype=np.int64)
    s = shared / np.minimum(audience[pi], audience[pj]) if len(shared) else np.zeros(0)
    retained = (s >= config.theta) & (shared >= config.n_min)
    return MonthlyGraph(panel.window.month_at(m), nodes, audience, panel.affiliation[node_ids],
                        pi, pj, shared, s, retained, config)


def build_month_graphs(panel: FanMonthPanel, config: Optional[OverlapConfig] = None,
                       months: Optional[Iterable] = None, threads: int = 1) -> list:
    """One graph per month of the window (or of ``months``), in month order."""
    months = list(panel.window) if months is None else [MonthKey.parse(m) for m in months]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda mm: build_month_graph(panel, mm, config), months))
    return [build_month_graph(panel, mm, config) for mm in months]


def segment_subgraph(graph: Graph, segment) -> Graph:
    """Subgraph induced on nodes of one affiliation; cross-segment edges vanish."""
    return graph.induced(graph.affiliation == segment_code(segment))


class UnifiedGraph(Graph):
    """Pooled graph with weights w_ij summed over months."""

    def __init__(self, nodes, edge_i, edge_j, weight, affiliation, months_present):
        super().__init__(nodes, edge_i, edge_j, weight, affiliation)
        self.months_present = np.asarray(months_present, dtype=np.int64)

    def edge_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"i": [self.nodes[k] for k in self.edge_i],
                             "j": [self.nodes[k] for k in self.edge_j],
                             "w": self.weight}, columns=["i", "j", "w"])


def unified_graph(graphs: Sequence[MonthlyGraph], include_subthreshold: bool = False
                  ) -> UnifiedGraph:
    """Sum monthly Simpson weights per creator pair.

    By default only retained monthly edges contribute. With
    ``include_subthreshold`` every co-chatted pair between monthly nodes adds
    its Simpson value. Months are summed in the order given.
    """
    if not graphs:
        raise ValueError("need at least one monthly graph")
    aff: dict = {}
    for g in graphs:
        for n, a in zip(g.nodes, g.affiliation.tolist()):
            aff.setdefault(n, a)
    nodes = sorted(aff)
    pos = {n: i for i, n in enumerate(nodes)}
    weights: dict = {}
    present: dict = {}
    for g in graphs:
        gpos = np.array([pos[n] for n in g.nodes], dtype=np.int64)
        if include_subthreshold:
            ii, jj, ww = g.pair_i, g.pair_j, g.pair_simpson
        else:
            ii, jj, ww = g.edge_i, g.edge_j, g.weight
        for a, b, w in zip(gpos[ii].tolist(), gpos[jj].tolist(), ww.tolist()):
            key = (a, b) if a < b else (b, a)
            weights[key] = weights.get(key, 0.0) + w
            present[key] = present.get(key, 0) + 1
    keys = sorted(k for k, w in weights.items() if w > 0)
    return UnifiedGraph(nodes, [k[0] for k in keys], [k[1] for k in keys],
                        [weights[k] for k in keys], [aff[n] for n in nodes],
                        [present[k] for k in keys])


def monthly_edge_frame(graphs: Sequence[MonthlyGraph]) -> pd.DataFrame:
    frames = [g.edge_frame() for g in graphs]
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["month", "i", "j", "shared", "simpson"])


def node_frame(graphs: Sequence[MonthlyGraph]) -> pd.DataFrame:
    frames = [g.node_frame() for g in graphs]
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["channel", "month", "audience_size", "affiliation"])
