"""Input coercion shared by the estimator wrappers and the CLI."""
from __future__ import annotations

import os
from typing import Optional

from .errors import ConfigError
from .ingest import EventTable, Roster, dedupe, parse_events, parse_roster
from .months import MonthKey, MonthWindow
from .panel import FanMonthPanel


def check_events(X, roster: Optional[Roster] = None) -> EventTable:
    """EventTable as-is; paths are parsed (format from the suffix) and deduplicated."""
    if isinstance(X, EventTable):
        return X
    if isinstance(X, (str, os.PathLike)):
        table, _ = parse_events(X, roster=roster)
        return dedupe(table)
    raise TypeError(f"expected an EventTable or a path, got {type(X).__name__}")


def check_roster(roster) -> Roster:
    if isinstance(roster, Roster):
        return roster
    if isinstance(roster, (str, os.PathLike)):
        return parse_roster(roster)
    raise TypeError(f"expected a Roster or a path, got {type(roster).__name__}")


def check_panel(X) -> FanMonthPanel:
    if not isinstance(X, FanMonthPanel):
        raise TypeError(f"expected a FanMonthPanel, got {type(X).__name__}")
    return X


def check_window(start, end) -> Optional[MonthWindow]:
    if start is None and end is None:
        return None
    if start is None or end is None:
        raise ConfigError("window needs both a start and an end month")
    return MonthWindow(MonthKey.parse(start), MonthKey.parse(end))


def check_horizons(horizons) -> tuple:
    if isinstance(horizons, (int,)):
        horizons = (horizons,)
    out = tuple(int(k) for k in horizons)
    if not out or any(k < 1 for k in out):
        raise ConfigError(f"horizons must be positive integers, got {horizons!r}")
    return out
