"""Parsing, validation and deduplication of chat-event logs and creator rosters.

Events are held column-wise in an :class:`EventTable`: integer codes for users
and channels (interned in first-seen order) plus the token arrays needed to
map the codes back. CSV input goes through a vectorised polars path; JSONL is
parsed line by line with :mod:`json`.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union

import numpy as np
import polars as pl

from .errors import EmptyInputError, FormatError
from .months import MonthWindow

Source = Union[str, os.PathLike, bytes, IO[bytes]]

AGENCY = 1
INDEPENDENT = 0
SEGMENT_NAMES = {AGENCY: "Agency", INDEPENDENT: "Independent"}
AFFILIATION_LABELS = {"agency": AGENCY, "independent": INDEPENDENT}


@dataclass(frozen=True)
class ChatEvent:
    user: str
    channel: str
    timestamp: int  # UTC epoch seconds
    message_count: int = 1


@dataclass(frozen=True)
class CreatorRecord:
    channel: str
    affiliation: int  # 1 = Agency, 0 = Independent
    debut: Optional[_dt.date] = None
    gender: Optional[str] = None

    @property
    def segment(self) -> str:
        return SEGMENT_NAMES[self.affiliation]


def _frozen(a, dtype) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class EventTable:
    """Immutable column store of chat events.

    ``user`` and ``channel`` are dense integer codes into ``user_tokens`` and
    ``channel_tokens``; codes follow first-seen order in the source.
    """

    __slots__ = ("user", "channel", "ts", "n", "user_tokens", "channel_tokens")

    def __init__(self, user, channel, ts, n, user_tokens, channel_tokens):
        self.user = _frozen(user, np.int32)
        self.channel = _frozen(channel, np.int32)
        self.ts = _frozen(ts, np.int64)
        self.n = _frozen(n, np.int64)
        self.user_tokens = tuple(user_tokens)
        self.channel_tokens = tuple(channel_tokens)
        if not (len(self.user) == len(self.channel) == len(self.ts) == len(self.n)):
            raise ValueError("column lengths differ")

    @classmethod
    def from_events(cls, events: Iterable[Union[ChatEvent, tuple]]) -> "EventTable":
        users: dict[str, int] = {}
        channels: dict[str, int] = {}
        u, c, t, n = [], [], [], []
        for ev in events:
            if not isinstance(ev, ChatEvent):
                ev = ChatEvent(*ev)
            u.append(users.setdefault(ev.user, len(users)))
            c.append(channels.setdefault(ev.channel, len(channels)))
            t.append(ev.timestamp)
            n.append(ev.message_count)
        return cls(u, c, t, n, users, channels)

    def __len__(self) -> int:
        return len(self.ts)

    def __iter__(self) -> Iterator[ChatEvent]:
        ut, ct = self.user_tokens, self.channel_tokens
        for u, c, t, n in zip(self.user.tolist(), self.channel.tolist(),
                              self.ts.tolist(), self.n.tolist()):
            yield ChatEvent(ut[u], ct[c], t, n)

    def take(self, index) -> "EventTable":
        """Row subset; token tables are kept as they are."""
        return EventTable(self.user[index], self.channel[index], self.ts[index],
                          self.n[index], self.user_tokens, self.channel_tokens)

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame({
            "user": pl.Series(self.user_tokens, dtype=pl.String).gather(self.user),
            "channel": pl.Series(self.channel_tokens, dtype=pl.String).gather(self.channel),
            "ts": self.ts,
            "n": self.n,
        })

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventTable):
            return NotImplemented
        return (self.user_tokens == other.user_tokens
                and self.channel_tokens == other.channel_tokens
                and np.array_equal(self.user, other.user)
                and np.array_equal(self.channel, other.channel)
                and np.array_equal(self.ts, other.ts)
                and np.array_equal(self.n, other.n))

    def __repr__(self) -> str:
        return (f"EventTable({len(self)} events, {len(self.user_tokens)} users, "
                f"{len(self.channel_tokens)} channels)")


@dataclass
class ParseReport:
    lines: int = 0
    accepted: int = 0
    malformed: int = 0
    out_of_window: int = 0
    unknown_channel: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# --------------------------------------------------------------------------
# reading helpers

def _read_bytes(source: Source) -> bytes:
    try:
        if isinstance(source, (bytes, bytearray)):
            return bytes(source)
        if hasattr(source, "read"):
            data = source.read()
            return data.encode("utf-8") if isinstance(data, str) else data
        return Path(source).read_bytes()
    except OSError:
        raise
    except Exception as exc:  # pragma: no cover - exotic stream objects
        raise OSError(f"cannot read event source: {exc}") from exc


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise OSError(f"input is not valid UTF-8: {exc}") from exc


def _infer_format(source: Source, fmt: Optional[str]) -> str:
    if fmt is not None:
        fmt = fmt.lower()
    elif isinstance(source, (str, os.PathLike)):
        suffix = Path(source).suffix.lower()
        fmt = {".jsonl": "jsonl", ".ndjson": "jsonl", ".json": "jsonl", ".csv": "csv"}.get(suffix)
    if fmt not in ("jsonl", "csv"):
        raise FormatError(f"cannot determine event format (got {fmt!r}); pass format='jsonl' or 'csv'")
    return fmt


def parse_timestamp(value) -> Optional[int]:
    """UTC epoch seconds from an integer or an ISO-8601 string; None if invalid.

    Naive ISO timestamps are taken as UTC. Sub-second parts are floored.
    """
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if not isinstance(value, str):
        return None
    s = value.strip()
    if not s:
        return None
    if s.isdigit():
        return int(s)
    if s[-1] in "Zz":
        s = s[:-1] + "+00:00"
    try:
        dt = _dt.datetime.fromisoformat(s)
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=_dt.timezone.utc)
    return math.floor(dt.timestamp())


def _token(value) -> Optional[str]:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str) and value != "":
        return value
    return None


def _parse_jsonl(text: str):
    """Yield (user, channel, ts, n) or None per non-blank line."""
    loads = json.loads
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            obj = loads(line)
        except ValueError:
            yield None
            continue
        if not isinstance(obj, dict):
            yield None
            continue
        user = _token(obj.get("user"))
        chan = _token(obj.get("channel"))
        ts = parse_timestamp(obj.get("ts"))
        n = obj.get("n")
        if n is None:
            n = 1
        elif type(n) is not int:
            n = None
        if user is None or chan is None or ts is None or n is None or n < 1:
            yield None
        else:
            yield user, chan, ts, n


_CSV_COLUMNS = ("user", "channel", "ts")


def _csv_rows_python(text: str) -> pl.DataFrame:
    """Fallback CSV reader for inputs polars rejects (ragged or bad quoting)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyInputError("event CSV is empty")
    cols = {name.strip(): i for i, name in enumerate(header)}
    _check_header(cols)
    out = {k: [] for k in ("user", "channel", "ts", "n")}
    width = len(header)
    for row in reader:
        if not any(f.strip() for f in row):
            continue
        if len(row) > width:
            for k in out:
                out[k].append(None)
            continue
        row = row + [""] * (width - len(row))
        for k in out:
            out[k].append(row[cols[k]] if k in cols else None)
    return pl.DataFrame(out, schema={k: pl.String for k in out})


def _check_header(cols) -> None:
    missing = [c for c in _CSV_COLUMNS if c not in cols]
    if missing:
        raise FormatError(f"event CSV header lacks column(s) {missing}")


def _csv_frame(data: bytes) -> pl.DataFrame:
    try:
        df = pl.read_csv(io.BytesIO(data), infer_schema=False, has_header=True)
    except pl.exceptions.NoDataError:
        raise EmptyInputError("event CSV is empty")
    except Exception:
        return _csv_rows_python(_decode(data))
    df = df.rename({c: c.strip() for c in df.columns})
    _check_header(set(df.columns))
    if "n" not in df.columns:
        df = df.with_columns(pl.lit(None, dtype=pl.String).alias("n"))
    df = df.select("user", "channel", "ts", "n")
    # rows with every field empty are blank lines
    return df.filter(pl.any_horizontal(pl.all().str.strip_chars().str.len_bytes() > 0))


def _validate_csv_frame(df: pl.DataFrame) -> pl.DataFrame:
    """Add parsed ``ts_i``/``n_i`` columns and an ``ok`` flag, vectorised."""
    ts = pl.col("ts").str.strip_chars()
    n = pl.col("n").str.strip_chars()
    df = df.with_columns(
        ts.cast(pl.Int64, strict=False).alias("ts_i"),
        pl.when(n.is_null() | (n == "")).then(pl.lit(1, pl.Int64))
        .otherwise(n.cast(pl.Int64, strict=False)).alias("n_i"),
        ts.str.contains(r"^\d+$").fill_null(False).alias("ts_digits"),
    )
    iso = df.filter(~pl.col("ts_digits") & pl.col("ts").is_not_null())["ts"].unique()
    if len(iso):
        mapping = pl.DataFrame({"ts": iso, "ts_iso": [parse_timestamp(v) for v in iso.to_list()]},
                               schema={"ts": pl.String, "ts_iso": pl.Int64})
        df = df.join(mapping, on="ts", how="left", maintain_order="left")
        df = df.with_columns(pl.when(pl.col("ts_digits")).then(pl.col("ts_i"))
                             .otherwise(pl.col("ts_iso")).alias("ts_i")).drop("ts_iso")
    else:
        df = df.with_columns(pl.when(pl.col("ts_digits")).then(pl.col("ts_i")).alias("ts_i"))
    # n must be a plain positive integer literal
    n_ok = pl.col("n").is_null() | (pl.col("n").str.strip_chars() == "") | \
        pl.col("n").str.strip_chars().str.contains(r"^\d+$")
    ok = (pl.col("user").is_not_null() & (pl.col("user") != "")
          & pl.col("channel").is_not_null() & (pl.col("channel") != "")
          & pl.col("ts_i").is_not_null() & n_ok.fill_null(False)
          & pl.col("n_i").is_not_null() & (pl.col("n_i") >= 1))
    return df.with_columns(ok.fill_null(False).alias("ok"))


def _intern(series: pl.Series) -> tuple[np.ndarray, list[str]]:
    uniq = series.unique(maintain_order=True)
    codes = series.replace_strict(uniq, pl.int_range(len(uniq), eager=True, dtype=pl.Int32),
                                  return_dtype=pl.Int32)
    return codes.to_numpy(), uniq.to_list()


def _finish(df: pl.DataFrame, report: ParseReport, window, roster) -> EventTable:
    """Apply window and roster filters to validated rows and intern tokens."""
    report.malformed += int((~df["ok"]).sum())
    df = df.filter(pl.col("ok"))
    if window is not None:
        lo, hi = window.epoch_bounds()
        inside = (pl.col("ts_i") >= lo) & (pl.col("ts_i") < hi)
        report.out_of_window = int(df.select((~inside).sum()).item())
        df = df.filter(inside)
    if roster is not None:
        known = pl.col("channel").is_in(list(roster.channels))
        report.unknown_channel = int(df.select((~known).sum()).item())
        df = df.filter(known)
    report.accepted = df.height
    if df.height == 0:
        raise EmptyInputError(f"no well-formed events in input ({report.as_dict()})")
    user, user_tokens = _intern(df["user"])
    chan, chan_tokens = _intern(df["channel"])
    return EventTable(user, chan, df["ts_i"].to_numpy(), df["n_i"].to_numpy(),
                      user_tokens, chan_tokens)


def parse_events(source: Source, format: Optional[str] = None, *,
                 window: Optional[MonthWindow] = None,
                 roster: Optional["Roster"] = None) -> tuple[EventTable, ParseReport]:
    """Read events from JSONL or CSV.

    Malformed lines, events outside ``window`` and events on channels absent
    from ``roster`` are skipped and counted in the returned report (a line is
    counted once, in that order of precedence). Output preserves input order.

    Raises ``OSError`` for unreadable or non-UTF-8 input and
    :class:`EmptyInputError` when nothing survives.
    """
    fmt = _infer_format(source, format)
    data = _read_bytes(source)
    report = ParseReport()
    if fmt == "csv":
        _decode(data)  # UTF-8 check only; polars reads the bytes
        df = _validate_csv_frame(_csv_frame(data))
        report.lines = df.height
        return _finish(df, report, window, roster), report

    rows = list(_parse_jsonl(_decode(data)))
    report.lines = len(rows)
    good = [r for r in rows if r is not None]
    df = pl.DataFrame(
        {"user": [r[0] for r in good], "channel": [r[1] for r in good],
         "ts_i": [r[2] for r in good], "n_i": [r[3] for r in good]},
        schema={"user": pl.String, "channel": pl.String, "ts_i": pl.Int64, "n_i": pl.Int64},
    ).with_columns(pl.lit(True).alias("ok"))
    report.malformed = len(rows) - len(good)
    return _finish(df, report, window, roster), report


def dedupe(events: EventTable) -> EventTable:
    """Drop exact repeats of (user, channel, timestamp, message_count).

    The first occurrence survives and relative order is kept.
    """
    if len(events) == 0:
        return events
    frame = pl.DataFrame({"u": events.user, "c": events.channel, "t": events.ts, "n": events.n})
    keep = frame.select(pl.struct("u", "c", "t", "n").is_first_distinct()).to_series().to_numpy()
    if keep.all():
        return events
    return events.take(np.flatnonzero(keep))


def write_events(events: EventTable, dest: Union[str, os.PathLike, IO[bytes]],
                 format: str = "csv") -> None:
    """Serialise to the ingest formats; timestamps are written as epoch seconds."""
    frame = events.to_frame()
    if format == "csv":
        frame.write_csv(dest)
    elif format == "jsonl":
        frame.write_ndjson(dest)
    else:
        raise FormatError(f"unknown event format {format!r}")


# --------------------------------------------------------------------------
# roster

@dataclass
class RosterReport:
    rows: int = 0
    rejected: int = 0
    duplicates: int = 0
    rejected_rows: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"rows": self.rows, "rejected": self.rejected, "duplicates": self.duplicates}


class Roster:
    """Creator roster keyed by channel token."""

    def __init__(self, records: Iterable[CreatorRecord], report: Optional[RosterReport] = None):
        self.records: dict[str, CreatorRecord] = {}
        for rec in records:
            self.records[rec.channel] = rec
        self.report = report or RosterReport(rows=len(self.records))

    @property
    def channels(self):
        return self.records.keys()

    def affiliation(self, channel: str) -> int:
        return self.records[channel].affiliation

    def affiliations(self, tokens: Iterable[str]) -> np.ndarray:
        """Affiliation per token; -1 for tokens missing from the roster."""
        rec = self.records
        return np.array([rec[t].affiliation if t in rec else -1 for t in tokens], dtype=np.int8)

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, channel) -> bool:
        return channel in self.records

    def __iter__(self) -> Iterator[CreatorRecord]:
        return iter(self.records.values())


def parse_roster(source: Source) -> Roster:
    """Read a roster CSV with header ``channel,affiliation[,debut][,gender]``.

    Affiliation labels are ``agency``/``independent`` in any case. Rows with
    an unknown label, empty channel or unparseable debut date are rejected
    and reported; a repeated channel keeps the last row and bumps
    ``report.duplicates``.
    """
    text = _decode(_read_bytes(source))
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise EmptyInputError("roster is empty")
    reader.fieldnames = [f.strip().lower() for f in reader.fieldnames]
    if "channel" not in reader.fieldnames or "affiliation" not in reader.fieldnames:
        raise FormatError("roster header must contain 'channel' and 'affiliation'")
    report = RosterReport()
    records: dict[str, CreatorRecord] = {}
    for lineno, row in enumerate(reader, start=2):
        if not any((v or "").strip() for v in row.values() if isinstance(v, str)):
            continue
        report.rows += 1
        channel = (row.get("channel") or "").strip()
        label = (row.get("affiliation") or "").strip().lower()
        debut_raw = (row.get("debut") or "").strip()
        gender = (row.get("gender") or "").strip() or None
        try:
            debut = _dt.date.fromisoformat(debut_raw) if debut_raw else None
        except ValueError:
            debut = "bad"
        if not channel or label not in AFFILIATION_LABELS or debut == "bad":
            report.rejected += 1
            report.rejected_rows.append(lineno)
            continue
        if channel in records:
            report.duplicates += 1
        records[channel] = CreatorRecord(channel, AFFILIATION_LABELS[label], debut, gender)
    if not records:
        raise EmptyInputError("roster has no valid rows")
    return Roster(records.values(), report)


def write_roster(roster: Roster, dest) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["channel", "affiliation", "debut", "gender"])
    for rec in roster:
        w.writerow([rec.channel, "agency" if rec.affiliation == AGENCY else "independent",
                    rec.debut.isoformat() if rec.debut else "", rec.gender or ""])
    if hasattr(dest, "write"):
        dest.write(buf.getvalue().encode("utf-8"))
    else:
        Path(dest).write_text(buf.getvalue(), encoding="utf-8")
