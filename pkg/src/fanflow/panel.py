"""Fan-month panel and the fan-level commitment metrics built on it.

The panel stores the nonzero cells L[u, c, m] as parallel arrays sorted by
(user, month, channel). Per-fan matrices (activity, oshi, run lengths) are
derived lazily and cached; the panel itself is never mutated.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, EmptyInputError
from .ingest import AGENCY, INDEPENDENT, SEGMENT_NAMES, EventTable, Roster
from .months import MonthKey, MonthWindow, epoch_to_ordinal

NO_OSHI = -1


def segment_code(segment) -> int:
    """Accept 1/0, 'agency'/'independent' (any case) and return the indicator."""
    if isinstance(segment, str):
        key = segment.strip().lower()
        if key in ("agency", "a", "1"):
            return AGENCY
        if key in ("independent", "i", "0"):
            return INDEPENDENT
        raise ValueError(f"unknown segment {segment!r}")
    segment = int(segment)
    if segment not in (AGENCY, INDEPENDENT):
        raise ValueError(f"unknown segment {segment!r}")
    return segment


@dataclass
class PanelReport:
    events_in: int = 0
    out_of_window: int = 0
    unknown_channel: int = 0
    cells: int = 0


class FanMonthPanel:
    """Sparse message counts per (fan, channel, month) inside a month window.

    Attributes ``user``, ``channel`` and ``month`` index into ``user_tokens``,
    ``channel_tokens`` and the window respectively; ``count`` is always > 0.
    """

    def __init__(self, user, channel, month, count, user_tokens: Sequence[str],
                 channel_tokens: Sequence[str], affiliation, window: MonthWindow,
                 report: Optional[PanelReport] = None):
        order = np.lexsort((channel, month, user))
        self.user = np.asarray(user, dtype=np.int64)[order]
        self.channel = np.asarray(channel, dtype=np.int64)[order]
        self.month = np.asarray(month, dtype=np.int64)[order]
        self.count = np.asarray(count, dtype=np.int64)[order]
        if len(self.count) and self.count.min() <= 0:
            raise ValueError("panel cells must be positive")
        for a in (self.user, self.channel, self.month, self.count):
            a.setflags(write=False)
        self.user_tokens = tuple(user_tokens)
        self.channel_tokens = tuple(channel_tokens)
        self.affiliation = np.asarray(affiliation, dtype=np.int8)
        self.affiliation.setflags(write=False)
        self.window = window
        self.report = report or PanelReport(cells=len(self.count))

    # -- shape ------------------------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.user_tokens)

    @property
    def n_channels(self) -> int:
        return len(self.channel_tokens)

    @property
    def n_months(self) -> int:
        return len(self.window)

    def total_messages(self) -> int:
        return int(self.count.sum())

    # -- lookups ----------------------------------------------------------
    @cached_property
    def _user_index(self) -> dict:
        return {t: i for i, t in enumerate(self.user_tokens)}

    @cached_property
    def _channel_index(self) -> dict:
        return {t: i for i, t in enumerate(self.channel_tokens)}

    def user_id(self, user) -> Optional[int]:
        if isinstance(user, (int, np.integer)):
            return int(user)
        return self._user_index.get(user)

    def channel_id(self, channel) -> Optional[int]:
        if isinstance(channel, (int, np.integer)):
            return int(channel)
        return self._channel_index.get(channel)

    def month_index(self, month) -> Optional[int]:
        if isinstance(month, (int, np.integer)):
            return int(month) if 0 <= month < self.n_months else None
        month = MonthKey.parse(month)
        return self.window.index(month) if month in self.window else None

    def cells(self, user) -> dict:
        """{(channel token, MonthKey): count} for one fan."""
        u = self.user_id(user)
        lo, hi = np.searchsorted(self.user, [u, u + 1])
        return {(self.channel_tokens[c], self.window.month_at(m)): int(n)
                for c, m, n in zip(self.channel[lo:hi], self.month[lo:hi], self.count[lo:hi])}

    # -- derived matrices -------------------------------------------------
    @cached_property
    def channel_rank(self) -> np.ndarray:
        """Position of each channel in lexicographic token order."""
        order = sorted(range(self.n_channels), key=lambda i: self.channel_tokens[i])
        rank = np.empty(self.n_channels, dtype=np.int64)
        rank[order] = np.arange(self.n_channels)
        return rank

    @cached_property
    def active(self) -> np.ndarray:
        """Boolean (users, months): fan posted at least one message."""
        a = np.zeros((self.n_users, self.n_months), dtype=bool)
        a[self.user, self.month] = True
        a.setflags(write=False)
        return a

    @cached_property
    def oshi_matrix(self) -> np.ndarray:
        """Channel id of each fan's oshi per month, ``NO_OSHI`` when inactive.

        Largest monthly count wins; ties go to the lexicographically smallest
        channel token.
        """
        o = np.full((self.n_users, self.n_months), NO_OSHI, dtype=np.int64)
        if len(self.count):
            cell = self.user * self.n_months + self.month
            order = np.lexsort((self.channel_rank[self.channel], -self.count, cell))
            cell_sorted = cell[order]
            first = np.ones(len(order), dtype=bool)
            first[1:] = cell_sorted[1:] != cell_sorted[:-1]
            pick = order[first]
            o[self.user[pick], self.month[pick]] = self.channel[pick]
        o.setflags(write=False)
        return o

    @cached_property
    def oshi_segment(self) -> np.ndarray:
        seg = np.full(self.oshi_matrix.shape, -1, dtype=np.int8)
        mask = self.oshi_matrix >= 0
        seg[mask] = self.affiliation[self.oshi_matrix[mask]]
        seg.setflags(write=False)
        return seg

    @cached_property
    def current_run(self) -> np.ndarray:
        """Consecutive active months ending at (and including) each month."""
        run = np.zeros((self.n_users, self.n_months), dtype=np.int64)
        prev = np.zeros(self.n_users, dtype=np.int64)
        for m in range(self.n_months):
            prev = np.where(self.active[:, m], prev + 1, 0)
            run[:, m] = prev
        run.setflags(write=False)
        return run

    @cached_property
    def forward_run(self) -> np.ndarray:
        """Consecutive active months starting at each month."""
        run = np.zeros((self.n_users, self.n_months), dtype=np.int64)
        nxt = np.zeros(self.n_users, dtype=np.int64)
        for m in range(self.n_months - 1, -1, -1):
            nxt = np.where(self.active[:, m], nxt + 1, 0)
            run[:, m] = nxt
        run.setflags(write=False)
        return run

    @cached_property
    def longest_run(self) -> np.ndarray:
        if self.n_months == 0:
            return np.zeros(self.n_users, dtype=np.int64)
        return self.current_run.max(axis=1)

    def retention_matrix(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(retained, evaluable) boolean matrices for horizon ``k``.

        A cell is evaluable when the fan is active at m and m+k lies inside
        the window.
        """
        if k < 1:
            raise ValueError("horizon k must be >= 1")
        evaluable = np.zeros_like(self.active)
        retained = np.zeros_like(self.active)
        if k < self.n_months:
            last = self.n_months - k
            evaluable[:, :last] = self.active[:, :last]
            retained[:, :last] = evaluable[:, :last] & (self.forward_run[:, 1:last + 1] >= k)
        return retained, evaluable

    def switch_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """(switched, evaluable) for month m -> m+1; last month never evaluable."""
        evaluable = np.zeros_like(self.active)
        switched = np.zeros_like(self.active)
        if self.n_months > 1:
            evaluable[:, :-1] = self.active[:, :-1] & self.active[:, 1:]
            switched[:, :-1] = evaluable[:, :-1] & (self.oshi_matrix[:, :-1] != self.oshi_matrix[:, 1:])
        return switched, evaluable

    def __repr__(self) -> str:
        return (f"FanMonthPanel({self.n_users} fans, {self.n_channels} channels, "
                f"window {self.window}, {len(self.count)} cells)")


def build_panel(events: EventTable, roster: Roster,
                window: Optional[MonthWindow] = None) -> FanMonthPanel:
    """Aggregate events into monthly per-(fan, channel) message totals.

    ``window`` defaults to the span of the events. Events outside the window
    or on channels missing from the roster are dropped and counted in
    ``panel.report``.
    """
    if len(events) == 0:
        raise EmptyInputError("no events to aggregate")
    ordinal = epoch_to_ordinal(events.ts)
    if window is None:
        window = MonthWindow(MonthKey(int(ordinal.min())), MonthKey(int(ordinal.max())))
    if len(window) < 1:
        raise ConfigError("empty window")
    report = PanelReport(events_in=len(events))

    chan_aff = roster.affiliations(events.channel_tokens)
    in_window = (ordinal >= window.start.ordinal) & (ordinal <= window.end.ordinal)
    known = chan_aff[events.channel] >= 0
    report.out_of_window = int((~in_window).sum())
    report.unknown_channel = int((in_window & ~known).sum())
    keep = in_window & known

    u_raw = events.user[keep].astype(np.int64)
    c_raw = events.channel[keep].astype(np.int64)
    m = ordinal[keep] - window.start.ordinal
    n = events.n[keep]

    # compact ids; np.unique keeps the ingest (first-seen) order of codes
    users, u = np.unique(u_raw, return_inverse=True)
    chans, c = np.unique(c_raw, return_inverse=True)
    n_m, n_c = len(window), len(chans)
    key = (u * n_m + m) * n_c + c
    cells, inverse = np.unique(key, return_inverse=True)
    counts = np.bincount(inverse, weights=n, minlength=len(cells))
    counts = np.rint(counts).astype(np.int64)
    cu, rest = np.divmod(cells, n_m * n_c)
    cm, cc = np.divmod(rest, n_c)
    report.cells = len(cells)

    user_tokens = [events.user_tokens[i] for i in users]
    chan_tokens = [events.channel_tokens[i] for i in chans]
    return FanMonthPanel(cu, cc, cm, counts, user_tokens, chan_tokens,
                         chan_aff[chans], window, report)


# ---------------------------------------------------------------------------
# per-fan queries

def _um(panel: FanMonthPanel, user, month) -> tuple[Optional[int], Optional[int]]:
    return panel.user_id(user), panel.month_index(month)


def oshi(panel: FanMonthPanel, user, month) -> Optional[str]:
    """Channel receiving most of the fan's messages that month, or None."""
    u, m = _um(panel, user, month)
    if u is None or m is None:
        return None
    c = panel.oshi_matrix[u, m]
    return None if c == NO_OSHI else panel.channel_tokens[c]


def retention(panel: FanMonthPanel, user, month, k: int) -> Optional[int]:
    """1 if the fan is active in every month m+1..m+k, else 0.

    Returns None (not evaluable) when the fan is inactive at m or the horizon
    runs past the window.
    """
    if k < 1:
        raise ValueError("horizon k must be >= 1")
    u, m = _um(panel, user, month)
    if u is None or m is None or not panel.active[u, m] or m + k >= panel.n_months:
        return None
    return int(panel.forward_run[u, m + 1] >= k)


def oshi_switch(panel: FanMonthPanel, user, month) -> Optional[int]:
    u, m = _um(panel, user, month)
    if u is None or m is None or m + 1 >= panel.n_months:
        return None
    if not (panel.active[u, m] and panel.active[u, m + 1]):
        return None
    return int(panel.oshi_matrix[u, m] != panel.oshi_matrix[u, m + 1])


def run_lengths(panel: FanMonthPanel, user, month) -> tuple[int, int]:
    """(current streak ending at month, longest streak in the window)."""
    u, m = _um(panel, user, month)
    if u is None:
        return 0, 0
    current = 0 if m is None else int(panel.current_run[u, m])
    return current, int(panel.longest_run[u])


# ---------------------------------------------------------------------------
# aggregates

@dataclass(frozen=True)
class RateResult:
    count: int
    retained: int
    rate: Optional[float]


def retention_rate(panel: FanMonthPanel, segment, month, k: int) -> RateResult:
    """Share of evaluable fans retained, among fans whose oshi at m is in ``segment``."""
    s = segment_code(segment)
    m = panel.month_index(month)
    if m is None:
        return RateResult(0, 0, None)
    retained, evaluable = panel.retention_matrix(k)
    mask = evaluable[:, m] & (panel.oshi_segment[:, m] == s)
    count = int(mask.sum())
    hits = int(retained[mask, m].sum())
    return RateResult(count, hits, hits / count if count else None)


def retention_table(panel: FanMonthPanel, horizons: Sequence[int] = (2, 3)) -> pd.DataFrame:
    """Rows (segment, month, k, count, retained, rate) for every evaluable month."""
    rows = []
    for k in horizons:
        retained, evaluable = panel.retention_matrix(k)
        for s in (AGENCY, INDEPENDENT):
            in_seg = panel.oshi_segment == s
            counts = (evaluable & in_seg).sum(axis=0)
            hits = (retained & in_seg).sum(axis=0)
            for m in range(panel.n_months):
                if m + k >= panel.n_months:
                    continue
                c = int(counts[m])
                rows.append({"segment": SEGMENT_NAMES[s], "month": str(panel.window.month_at(m)),
                             "k": k, "count": c, "retained": int(hits[m]),
                             "rate": hits[m] / c if c else None})
    return pd.DataFrame(rows, columns=["segment", "month", "k", "count", "retained", "rate"])


def _creator_month_mean(panel: FanMonthPanel, values: np.ndarray, valid: np.ndarray):
    """Mean of fan values per (oshi creator, month), then per creator over months.

    Returns (creator means with NaN where undefined, number of creator-months used).
    """
    n_c, n_m = panel.n_channels, panel.n_months
    u, m = np.nonzero(valid)
    c = panel.oshi_matrix[u, m]
    key = c * n_m + m
    sums = np.bincount(key, weights=values[u, m].astype(np.float64), minlength=n_c * n_m)
    cnts = np.bincount(key, minlength=n_c * n_m)
    # bincount of an empty key array comes back as int64
    sums, cnts = sums.astype(np.float64).reshape(n_c, n_m), cnts.reshape(n_c, n_m)
    has = cnts > 0
    cm_mean = np.divide(sums, cnts, out=np.zeros_like(sums), where=has)
    n_months = has.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        creator = np.where(n_months > 0, cm_mean.sum(axis=1) / n_months, np.nan)
    return creator, n_months


def switch_table(panel: FanMonthPanel) -> pd.DataFrame:
    """Per creator-month switch rate among fans whose month-m oshi is that creator."""
    switched, evaluable = panel.switch_matrix()
    u, m = np.nonzero(evaluable)
    c = panel.oshi_matrix[u, m]
    df = pd.DataFrame({"channel_id": c, "month": m, "switched": switched[u, m].astype(np.int64)})
    out = df.groupby(["channel_id", "month"], sort=True)["switched"].agg(["count", "sum"]).reset_index()
    out["rate"] = out["sum"] / out["count"]
    out.insert(0, "channel", [panel.channel_tokens[i] for i in out["channel_id"]])
    out["month"] = [str(panel.window.month_at(i)) for i in out["month"]]
    return out.rename(columns={"sum": "switches", "count": "fans"}).drop(columns="channel_id")


CREATOR_METRICS = ("two_month_retention", "three_month_retention",
                   "longest_active_run", "oshi_switch_probability")


def creator_metrics(panel: FanMonthPanel) -> pd.DataFrame:
    """Creator-level commitment metrics.

    Each value averages fan indicators over fans whose monthly oshi is the
    creator, then averages those creator-month means over months. The run
    column uses each fan's longest streak in the window; ``current_run`` is
    the streak ending at the month.
    """
    active = panel.active
    ret2, ev2 = panel.retention_matrix(2)
    ret3, ev3 = panel.retention_matrix(3)
    switched, ev_sw = panel.switch_matrix()
    longest = np.broadcast_to(panel.longest_run[:, None], active.shape)

    data = {"channel": list(panel.channel_tokens),
            "affiliation": panel.affiliation.astype(int),
            "segment": [SEGMENT_NAMES[int(a)] for a in panel.affiliation]}
    for name, vals, valid in (
        ("two_month_retention", ret2, ev2),
        ("three_month_retention", ret3, ev3),
        ("longest_active_run", longest, active),
        ("oshi_switch_probability", switched, ev_sw),
        ("current_run", panel.current_run, active),
    ):
        data[name], data[f"{name}_months"] = _creator_month_mean(panel, vals, valid)
    df = pd.DataFrame(data)
    order = np.argsort(np.asarray(panel.channel_tokens, dtype=object), kind="stable")
    return df.iloc[order].reset_index(drop=True)
