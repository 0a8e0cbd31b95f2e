"""Corpus builders shared by the tests."""
import calendar
import random

from fanflow.ingest import AGENCY, INDEPENDENT, CreatorRecord, EventTable, Roster
from fanflow.months import MonthKey, MonthWindow
from fanflow.panel import build_panel

WINDOW_START = MonthKey.of(2023, 1)


def month_ts(i: int, day: int = 1, second: int = 0) -> int:
    """Epoch seconds inside month i of the 2023-01 based window."""
    return (WINDOW_START + i).start_epoch() + (day - 1) * 86400 + second


def make_roster(channels: dict) -> Roster:
    return Roster(CreatorRecord(c, a) for c, a in channels.items())


def random_corpus(rng: random.Random, n_fans: int, n_channels: int, n_months: int,
                  activity: float = 0.5, max_channels: int = 3, max_count: int = 3):
    """Events and affiliations with plenty of gaps, ties and cross-segment chat."""
    channels = {f"ch{c:02d}": rng.choice((AGENCY, INDEPENDENT)) for c in range(n_channels)}
    names = sorted(channels)
    events = []
    for f in range(n_fans):
        user = f"u{f:04d}"
        for m in range(n_months):
            if rng.random() > activity:
                continue
            days = calendar.monthrange(2023 + (m // 12), m % 12 + 1)[1]
            for c in rng.sample(names, rng.randint(1, min(max_channels, n_channels))):
                events.append((user, c, month_ts(m, rng.randint(1, days), rng.randrange(86400)),
                               rng.randint(1, max_count)))
    rng.shuffle(events)
    return events, channels


def panel_from(events, channels, n_months):
    window = MonthWindow(WINDOW_START, WINDOW_START + (n_months - 1))
    return build_panel(EventTable.from_events(events), make_roster(channels), window)
