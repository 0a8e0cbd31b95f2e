"""Fan commitment, state-flow and audience-overlap measurement for live-chat logs."""

__version__ = "0.1.0"

from .errors import (ConfigError, DegenerateDataError, EmptyInputError, FanflowError,  # noqa: E402
                     FormatError, NotApplicableError, PairingError, UndefinedInputError)
from .ingest import (AGENCY, INDEPENDENT, ChatEvent, CreatorRecord, EventTable,  # noqa: E402
                     Roster, dedupe, parse_events, parse_roster, write_events)
from .months import MonthKey, MonthWindow  # noqa: E402
from .panel import FanMonthPanel, build_panel  # noqa: E402

__all__ = [
    "AGENCY", "INDEPENDENT", "ChatEvent", "CreatorRecord", "EventTable", "Roster",
    "FanMonthPanel", "MonthKey", "MonthWindow", "build_panel", "dedupe", "parse_events",
    "parse_roster", "write_events", "FanflowError", "ConfigError", "EmptyInputError",
    "FormatError", "UndefinedInputError", "NotApplicableError", "DegenerateDataError",
    "PairingError",
]
