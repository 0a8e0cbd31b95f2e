"""Same / Retain / Cross / Drop classification of origin cohorts and flow tables."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from .ingest import SEGMENT_NAMES
from .months import MonthKey
from .panel import NO_OSHI, FanMonthPanel, segment_code


class FlowState(enum.IntEnum):
    SAME = 0
    RETAIN = 1
    CROSS = 2
    DROP = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()


STATES = tuple(FlowState)
NOT_EVALUABLE = -1


def _cell_keys(panel: FanMonthPanel) -> np.ndarray:
    # rows are sorted by (user, month, channel) so these keys are sorted too
    return (panel.user * panel.n_months + panel.month) * panel.n_channels + panel.channel


def _segment_presence(panel: FanMonthPanel) -> np.ndarray:
    """Boolean (2, users, months): fan posted on some channel of segment s."""
    has = np.zeros((2, panel.n_users, panel.n_months), dtype=bool)
    seg = panel.affiliation[panel.channel]
    has[seg, panel.user, panel.month] = True
    return has


def classify_states(panel: FanMonthPanel, users: np.ndarray, months: np.ndarray,
                    origin_channels: np.ndarray, t: int, *, _cache=None) -> np.ndarray:
    """Vectorised state codes for fan origins (user, month, c0) at step t.

    Returns ``NOT_EVALUABLE`` where m+t falls outside the window.
    """
    users = np.asarray(users, dtype=np.int64)
    months = np.asarray(months, dtype=np.int64)
    c0 = np.asarray(origin_channels, dtype=np.int64)
    keys, presence = _cache if _cache is not None else (_cell_keys(panel), _segment_presence(panel))
    target = months + t
    ok = target < panel.n_months
    out = np.full(len(users), NOT_EVALUABLE, dtype=np.int8)
    u, tm, c = users[ok], target[ok], c0[ok]
    s0 = panel.affiliation[c].astype(np.int64)
    probe = (u * panel.n_months + tm) * panel.n_channels + c
    if len(keys):
        pos = np.minimum(np.searchsorted(keys, probe), len(keys) - 1)
        same = keys[pos] == probe
    else:
        same = np.zeros(len(probe), dtype=bool)
    retain = presence[s0, u, tm]
    cross = presence[1 - s0, u, tm]
    state = np.select([same, retain, cross], [FlowState.SAME, FlowState.RETAIN, FlowState.CROSS],
                      default=FlowState.DROP)
    out[ok] = state
    return out


def classify_state(panel: FanMonthPanel, user, month, t: int,
                   origin_channel=None) -> Optional[FlowState]:
    """State of one fan at month m+t relative to its origin (c0, s0) at m.

    ``origin_channel`` defaults to the fan's oshi at m; its affiliation sets
    s0. Returns None if m+t lies outside the window or the fan has no origin.
    """
    u, m = panel.user_id(user), panel.month_index(month)
    if u is None or m is None:
        return None
    c0 = panel.oshi_matrix[u, m] if origin_channel is None else panel.channel_id(origin_channel)
    if c0 is None or c0 == NO_OSHI:
        return None
    code = classify_states(panel, np.array([u]), np.array([m]), np.array([c0]), t)[0]
    return None if code == NOT_EVALUABLE else FlowState(int(code))


@dataclass
class FlowTable:
    """Path counts over ``horizon`` steps for one origin segment."""

    origin_segment: int
    horizon: int
    origin_months: list
    paths: dict = field(default_factory=dict)  # tuple[FlowState, ...] -> count
    excluded: int = 0

    @property
    def cohort_size(self) -> int:
        return int(sum(self.paths.values()))

    @property
    def empty(self) -> bool:
        return self.cohort_size == 0

    def marginal_counts(self) -> np.ndarray:
        """(horizon, 4) counts of each state at each step."""
        out = np.zeros((self.horizon, len(STATES)), dtype=np.int64)
        for path, n in self.paths.items():
            for t, s in enumerate(path):
                out[t, s] += n
        return out

    def marginals(self) -> np.ndarray:
        if self.empty:
            return np.zeros((self.horizon, len(STATES)))
        return self.marginal_counts() / self.cohort_size

    def share(self, path) -> float:
        path = tuple(FlowState(s) for s in path)
        return self.paths.get(path, 0) / self.cohort_size if not self.empty else 0.0

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per observed path."""
        rows = []
        n = self.cohort_size
        for path, count in sorted(self.paths.items()):
            row = {"origin_segment": SEGMENT_NAMES[self.origin_segment]}
            row.update({f"T{t + 1}": s.label for t, s in enumerate(path)})
            row.update(count=count, share=count / n)
            rows.append(row)
        cols = ["origin_segment"] + [f"T{t + 1}" for t in range(self.horizon)] + ["count", "share"]
        return pd.DataFrame(rows, columns=cols)


def default_origin_months(panel: FanMonthPanel, horizon: int = 3) -> list:
    """All months whose full horizon fits in the window."""
    return [panel.window.month_at(m) for m in range(max(panel.n_months - horizon, 0))]


def flow_distribution(panel: FanMonthPanel, segment, origin_months: Optional[Iterable] = None,
                      horizon: int = 3) -> FlowTable:
    """Pool fan paths over origin months for fans whose oshi is in ``segment``.

    Each step is classified independently, so a fan may Drop and reappear
    later. Origins whose horizon runs past the window are left out and
    counted in ``excluded``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    s0 = segment_code(segment)
    if origin_months is None:
        origin_months = default_origin_months(panel, horizon)
    months = sorted({MonthKey.parse(m) for m in origin_months})
    table = FlowTable(s0, horizon, [str(m) for m in months])
    idx = [panel.month_index(m) for m in months]
    idx = [m for m in idx if m is not None]
    if not idx:
        return table
    seg = panel.oshi_segment[:, idx] == s0
    u, j = np.nonzero(seg)
    m = np.asarray(idx, dtype=np.int64)[j]
    c0 = panel.oshi_matrix[u, m]
    cache = (_cell_keys(panel), _segment_presence(panel))
    steps = np.stack([classify_states(panel, u, m, c0, t, _cache=cache)
                      for t in range(1, horizon + 1)], axis=1) if len(u) else \
        np.zeros((0, horizon), dtype=np.int8)
    evaluable = (steps != NOT_EVALUABLE).all(axis=1)
    table.excluded = int((~evaluable).sum())
    steps = steps[evaluable].astype(np.int64)
    code = np.zeros(len(steps), dtype=np.int64)
    for t in range(horizon):
        code = code * len(STATES) + steps[:, t]
    counts = np.bincount(code, minlength=len(STATES) ** horizon)
    for c in np.flatnonzero(counts):
        path = []
        rem = int(c)
        for _ in range(horizon):
            rem, s = divmod(rem, len(STATES))
            path.append(FlowState(s))
        table.paths[tuple(reversed(path))] = int(counts[c])
    table.paths = dict(sorted(table.paths.items()))
    return table


def export_sankey(table: FlowTable) -> dict:
    """Node/link description of the flow between consecutive steps.

    Link shares are fractions of the whole cohort, so the links leaving
    each step sum to 1.
    """
    if table.empty:
        raise ValueError("cannot export an empty flow table")
    steps = [f"T{t + 1}" for t in range(table.horizon)]
    nodes = [{"id": f"{step}:{s.label}", "step": step, "state": s.label}
             for step in steps for s in STATES]
    n = table.cohort_size
    links = []
    for t in range(table.horizon - 1):
        flow = np.zeros((len(STATES), len(STATES)), dtype=np.int64)
        for path, count in table.paths.items():
            flow[path[t], path[t + 1]] += count
        for a, b in itertools.product(STATES, STATES):
            if flow[a, b]:
                links.append({"from": f"{steps[t]}:{a.label}", "to": f"{steps[t + 1]}:{b.label}",
                              "count": int(flow[a, b]), "share": flow[a, b] / n})
    marg = table.marginal_counts()
    return {
        "origin_segment": SEGMENT_NAMES[table.origin_segment],
        "steps": steps,
        "nodes": nodes,
        "links": links,
        "marginals": {steps[t]: {s.label: int(marg[t, s]) for s in STATES}
                      for t in range(table.horizon)},
        "metadata": {"origin_months": table.origin_months, "cohort_size": n,
                     "excluded_not_evaluable": table.excluded,
                     "retain_meaning": "same-segment retention"},
    }
