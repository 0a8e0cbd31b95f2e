"""Calendar-month arithmetic in UTC."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigError

_MONTH_RE = re.compile(r"^\s*(\d{4})-(\d{1,2})\s*$")
# ordinal of 1970-01, the numpy datetime64[M] epoch
_EPOCH_ORDINAL = 1970 * 12


@dataclass(frozen=True, order=True)
class MonthKey:
    """A UTC calendar month. Ordering and arithmetic go through ``ordinal``."""

    ordinal: int

    @classmethod
    def of(cls, year: int, month: int) -> "MonthKey":
        if not 1 <= month <= 12:
            raise ConfigError(f"month must be in 1..12, got {month}")
        return cls(year * 12 + (month - 1))

    @classmethod
    def parse(cls, text: "str | MonthKey") -> "MonthKey":
        if isinstance(text, MonthKey):
            return text
        m = _MONTH_RE.match(str(text))
        if m is None:
            raise ConfigError(f"expected YYYY-MM, got {text!r}")
        return cls.of(int(m.group(1)), int(m.group(2)))

    @classmethod
    def from_epoch(cls, seconds: int) -> "MonthKey":
        return cls(int(epoch_to_ordinal(np.asarray([seconds]))[0]))

    @property
    def year(self) -> int:
        return self.ordinal // 12

    @property
    def month(self) -> int:
        return self.ordinal % 12 + 1

    def __add__(self, k: int) -> "MonthKey":
        return MonthKey(self.ordinal + int(k))

    def __sub__(self, other):
        if isinstance(other, MonthKey):
            return self.ordinal - other.ordinal
        return MonthKey(self.ordinal - int(other))

    def start_epoch(self) -> int:
        """First second of the month, as UTC epoch seconds."""
        d = np.datetime64(self.ordinal - _EPOCH_ORDINAL, "M").astype("datetime64[s]")
        return int(d.astype(np.int64))

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    def __repr__(self) -> str:
        return f"MonthKey({self})"


def epoch_to_ordinal(seconds: np.ndarray) -> np.ndarray:
    """Vectorised UTC month ordinal (year*12 + month-1) of epoch seconds."""
    months = np.asarray(seconds, dtype=np.int64).astype("datetime64[s]").astype("datetime64[M]")
    return months.astype(np.int64) + _EPOCH_ORDINAL


@dataclass(frozen=True)
class MonthWindow:
    """Inclusive range of months."""

    start: MonthKey
    end: MonthKey

    def __post_init__(self):
        if self.end < self.start:
            raise ConfigError(f"empty window: {self.start} > {self.end}")

    @classmethod
    def parse(cls, start, end) -> "MonthWindow":
        return cls(MonthKey.parse(start), MonthKey.parse(end))

    def __len__(self) -> int:
        return self.end.ordinal - self.start.ordinal + 1

    def __iter__(self) -> Iterator[MonthKey]:
        for o in range(self.start.ordinal, self.end.ordinal + 1):
            yield MonthKey(o)

    def __contains__(self, month) -> bool:
        month = MonthKey.parse(month)
        return self.start <= month <= self.end

    def index(self, month) -> int:
        """Zero-based position of ``month`` inside the window."""
        month = MonthKey.parse(month)
        if month not in self:
            raise KeyError(f"{month} outside window {self}")
        return month.ordinal - self.start.ordinal

    def month_at(self, i: int) -> MonthKey:
        return MonthKey(self.start.ordinal + int(i))

    def epoch_bounds(self) -> tuple[int, int]:
        """Half-open [first second, first second after the window)."""
        return self.start.start_epoch(), (self.end + 1).start_epoch()

    def __str__(self) -> str:
        return f"{self.start}..{self.end}"
