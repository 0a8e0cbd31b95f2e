"""Deterministic synthetic chat corpora with circulate-and-recapture dynamics.

Every random draw is a pure function of (seed, fan, month, slot), computed
with the SplitMix64 finaliser, so output is identical whatever the order or
parallelism of generation. Fans move monthly between

* stay with the current oshi,
* switch to another creator of the same segment,
* leak to a creator of the other segment,
* drop (go silent),

and silent fans come back to their home segment with the recapture
probability. Active fans also chat on a few extra channels, mostly on
creators near their oshi on a ring, which is what produces overlap edges.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError
from .ingest import AGENCY, INDEPENDENT, CreatorRecord, EventTable, Roster
from .months import MonthKey

# SplitMix64 constants (Steele, Lea & Flood 2014)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
# odd multipliers separating the counter fields
_K_FAN = np.uint64(0xD1B54A32D192ED03)
_K_MONTH = np.uint64(0x8CB92BA72F3D8DD7)
_K_SLOT = np.uint64(0xCA5A826395121157)

_EXTRA_SLOTS = 3

# draw slots used per (fan, month)
_S_ENTRY, _S_MOVE, _S_PICK, _S_MSG, _S_TIME = 0, 1, 2, 3, 4
_S_EXTRA = 16  # + 4 * extra slot index + {0: occur, 1: where, 2: pick, 3: count, ...}


def _mix(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _MIX1
    x = x ^ (x >> np.uint64(27))
    x = x * _MIX2
    return x ^ (x >> np.uint64(31))


def counter_uniform(seed: int, fan, month, slot: int) -> np.ndarray:
    """Uniform [0, 1) draws keyed by (seed, fan, month, slot); fan and month broadcast."""
    fan = np.asarray(fan, dtype=np.uint64)
    month = np.asarray(month, dtype=np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed], dtype=np.uint64) * _GOLDEN + _GOLDEN)
        x = base ^ (fan * _K_FAN) ^ (month * _K_MONTH) ^ (np.uint64(slot + 1) * _K_SLOT)
        h = _mix(_mix(x))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class SegmentDynamics:
    creators: int = 20
    fans: int = 2000
    activity: float = 0.5      # monthly probability that a not-yet-seen fan starts chatting
    switch: float = 0.1        # active fan moves to another creator of the same segment
    leak: float = 0.05         # active fan moves to a creator of the other segment
    drop: float = 0.2          # active fan goes silent next month
    recapture: float = 0.3     # silent fan returns to its home segment
    coview: float = 0.3        # per extra slot, probability of chatting on another channel
    reach: int = 2             # ring distance of 'nearby' creators for co-viewing
    local: float = 0.8         # extra channel drawn near the oshi (else anywhere in the segment)
    cross_coview: float = 0.05  # extra channel drawn from the other segment

    def validate(self, name: str) -> None:
        for f in ("activity", "switch", "leak", "drop", "recapture", "coview", "local",
                  "cross_coview"):
            v = getattr(self, f)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}.{f} must lie in [0, 1], got {v}")
        if self.switch + self.leak + self.drop > 1.0 + 1e-12:
            raise ConfigError(f"{name}: switch + leak + drop exceeds 1")
        if self.local + self.cross_coview > 1.0 + 1e-12:
            raise ConfigError(f"{name}: local + cross_coview exceeds 1")
        if self.creators < 1 or self.fans < 0 or self.reach < 1:
            raise ConfigError(f"{name}: creators and reach must be >= 1, fans >= 0")

    @property
    def stay(self) -> float:
        return 1.0 - self.switch - self.leak - self.drop


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    months: int = 12
    start: str = "2023-01"
    message_p: float = 0.35   # P(stop) of the geometric tail of messages per active month
    extra_message_p: float = 0.6
    split_messages: bool = True  # one event per message; else one event per cell
    agency: SegmentDynamics = field(default_factory=SegmentDynamics)
    independent: SegmentDynamics = field(default_factory=SegmentDynamics)

    def validate(self) -> None:
        if self.months < 1:
            raise ConfigError("months must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for p in ("message_p", "extra_message_p"):
            if not 0.0 < getattr(self, p) <= 1.0:
                raise ConfigError(f"{p} must lie in (0, 1]")
        MonthKey.parse(self.start)
        self.agency.validate("agency")
        self.independent.validate("independent")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object],
                     base: Optional["SynthConfig"] = None) -> "SynthConfig":
        """Build from flat keys such as ``months`` or ``agency.recapture``.

        Keys not given keep their value in ``base`` (default: the defaults).
        """
        base = base or cls()
        top, seg = {}, {"agency": {}, "independent": {}}
        top_types = {f.name: f.type for f in fields(cls)}
        seg_fields = {f.name: f for f in fields(SegmentDynamics)}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if "." in key:
                part, name = key.split(".", 1)
                if part not in seg or name not in seg_fields:
                    raise ConfigError(f"unknown synth key {key!r}")
                conv = int if isinstance(getattr(SegmentDynamics(), name), int) else float
                seg[part][name] = _convert(raw, conv, key)
            elif key in top_types and key not in seg:
                default = getattr(cls(), key)
                conv = (bool if isinstance(default, bool) else int if isinstance(default, int)
                        else float if isinstance(default, float) else str)
                top[key] = _convert(raw, conv, key)
            else:
                raise ConfigError(f"unknown synth key {key!r}")
        cfg = replace(base, **top, agency=replace(base.agency, **seg["agency"]),
                      independent=replace(base.independent, **seg["independent"]))
        cfg.validate()
        return cfg

    def to_mapping(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("agency", "independent")}
        for part in ("agency", "independent"):
            for k, v in asdict(getattr(self, part)).items():
                out[f"{part}.{k}"] = v
        return out

    def dynamics(self, segment: int) -> SegmentDynamics:
        return self.agency if segment == AGENCY else self.independent


def _convert(raw, conv, key):
    if isinstance(raw, conv) and not (conv is int and isinstance(raw, bool)):
        return raw
    try:
        if conv is bool:
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        return conv(str(raw).strip()) if conv is not int else int(str(raw).strip(), 0)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def acceptance_config() -> SynthConfig:
    """The frozen corpus used by the acceptance suite and the CLI demo.

    Agency fans switch more often within the segment, leak and drop less and
    are recaptured more; agency co-viewing reaches further around the ring.
    """
    return SynthConfig(
        seed=20250203,
        months=12,
        start="2023-01",
        agency=SegmentDynamics(creators=48, fans=9000, activity=0.45, switch=0.16, leak=0.03,
                               drop=0.18, recapture=0.45, coview=0.45, reach=4, local=0.85,
                               cross_coview=0.03),
        independent=SegmentDynamics(creators=24, fans=4200, activity=0.45, switch=0.08, leak=0.06,
                                    drop=0.30, recapture=0.20, coview=0.25, reach=1, local=0.5,
                                    cross_coview=0.05),
    )


def _geometric(u: np.ndarray, p: float) -> np.ndarray:
    """Failures before first success, by inversion; 0 when p == 1."""
    if p >= 1.0:
        return np.zeros(len(u), dtype=np.int64)
    return np.floor(np.log1p(-u) / np.log1p(-p)).astype(np.int64)


def _pick(u: np.ndarray, lo: np.ndarray, size: np.ndarray) -> np.ndarray:
    return lo + np.minimum((u * size).astype(np.int64), size - 1)


def generate(config: SynthConfig) -> tuple[EventTable, Roster]:
    """Generate (events, roster). Events are sorted by (timestamp, fan, channel)."""
    config.validate()
    seed = int(config.seed)
    segs = (AGENCY, INDEPENDENT)
    dyn = {s: config.dynamics(s) for s in segs}
    # creator ids: agency block first, then independent
    c_lo = {AGENCY: 0, INDEPENDENT: dyn[AGENCY].creators}
    c_n = {s: dyn[s].creators for s in segs}
    n_creators = c_n[AGENCY] + c_n[INDEPENDENT]
    creator_seg = np.r_[np.full(c_n[AGENCY], AGENCY), np.full(c_n[INDEPENDENT], INDEPENDENT)]

    n_a, n_i = dyn[AGENCY].fans, dyn[INDEPENDENT].fans
    n_fans = n_a + n_i
    fan = np.arange(n_fans, dtype=np.int64)
    home = np.r_[np.full(n_a, AGENCY), np.full(n_i, INDEPENDENT)]

    def per_seg(seg_arr, attr):
        return np.where(seg_arr == AGENCY, getattr(dyn[AGENCY], attr), getattr(dyn[INDEPENDENT], attr))

    def lo_of(seg_arr):
        return np.where(seg_arr == AGENCY, c_lo[AGENCY], c_lo[INDEPENDENT])

    def n_of(seg_arr):
        return np.where(seg_arr == AGENCY, c_n[AGENCY], c_n[INDEPENDENT])

    started = np.zeros(n_fans, dtype=bool)
    active = np.zeros(n_fans, dtype=bool)
    oshi = np.full(n_fans, -1, dtype=np.int64)
    cells = []  # (fan, month, channel, count)

    for m in range(config.months):
        u_move = counter_uniform(seed, fan, m, _S_MOVE)
        u_pick = counter_uniform(seed, fan, m, _S_PICK)
        new_active = active.copy()
        new_oshi = oshi.copy()

        # entry
        entering = ~started & (counter_uniform(seed, fan, m, _S_ENTRY) < per_seg(home, "activity"))
        new_oshi[entering] = _pick(u_pick[entering], lo_of(home[entering]), n_of(home[entering]))
        new_active[entering] = True
        started |= entering

        if m > 0:
            # transitions of fans active last month
            cur_seg = np.where(oshi >= 0, creator_seg[np.maximum(oshi, 0)], home)
            d, sw, lk = per_seg(cur_seg, "drop"), per_seg(cur_seg, "switch"), per_seg(cur_seg, "leak")
            was = active & ~entering
            drop = was & (u_move < d)
            switch = was & ~drop & (u_move < d + sw)
            leak = was & ~drop & ~switch & (u_move < d + sw + lk)
            new_active[drop] = False
            if switch.any():
                # uniform over the other creators of the segment
                lo, n = lo_of(cur_seg[switch]), n_of(cur_seg[switch])
                off = np.minimum((u_pick[switch] * (n - 1)).astype(np.int64), np.maximum(n - 2, 0))
                cur_off = oshi[switch] - lo
                off = np.where(off >= cur_off, off + 1, off)
                new_oshi[switch] = np.where(n > 1, lo + off, oshi[switch])
            if leak.any():
                other = 1 - cur_seg[leak]
                new_oshi[leak] = _pick(u_pick[leak], lo_of(other), n_of(other))
            # recapture of silent fans into their home segment
            silent = started & ~active & ~entering
            back = silent & (u_move < per_seg(home, "recapture"))
            new_oshi[back] = _pick(u_pick[back], lo_of(home[back]), n_of(home[back]))
            new_active[back] = True

        active, oshi = new_active, new_oshi
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            continue
        seg_o = creator_seg[oshi[idx]]
        n_main = 1 + _geometric(counter_uniform(seed, idx, m, _S_MSG), config.message_p)
        cells.append((idx, np.full(len(idx), m), oshi[idx], n_main))
        for k in range(_EXTRA_SLOTS):
            base = _S_EXTRA + 4 * k
            occur = counter_uniform(seed, idx, m, base) < per_seg(seg_o, "coview")
            if not occur.any():
                continue
            f, so, om, cap = idx[occur], seg_o[occur], oshi[idx][occur], n_main[occur]
            where = counter_uniform(seed, f, m, base + 1)
            pick = counter_uniform(seed, f, m, base + 2)
            local, cross = per_seg(so, "local"), per_seg(so, "cross_coview")
            reach = per_seg(so, "reach")
            # neighbour at ring distance 1..reach on either side of the oshi
            seg_lo, seg_n = lo_of(so), n_of(so)
            step = _pick(pick, np.zeros_like(reach), 2 * reach)
            step = np.where(step < reach, step - reach, step - reach + 1)
            near = seg_lo + (om - seg_lo + step) % seg_n
            ch = np.where(where < local, near,
                          np.where(where < local + cross, _pick(pick, lo_of(1 - so), n_of(1 - so)),
                                   _pick(pick, seg_lo, n_of(so))))
            cnt = np.minimum(1 + _geometric(counter_uniform(seed, f, m, base + 3),
                                            config.extra_message_p), cap)
            keep = ch != om
            cells.append((f[keep], np.full(keep.sum(), m), ch[keep], cnt[keep]))

    return _emit(config, cells, n_fans, n_creators, creator_seg, c_lo)


def _tokens(n_fans, creator_seg, c_lo):
    width = max(6, len(str(n_fans)))
    fans = np.array([f"fan{i:0{width}d}" for i in range(n_fans)], dtype=object)
    chans = np.array([("ag" if s == AGENCY else "in") +
                      f"{i - (0 if s == AGENCY else c_lo[INDEPENDENT]):04d}"
                      for i, s in enumerate(creator_seg)], dtype=object)
    return fans, chans


def _emit(config, cells, n_fans, n_creators, creator_seg, c_lo):
    fans_tok, chan_tok = _tokens(n_fans, creator_seg, c_lo)
    roster = Roster([CreatorRecord(str(chan_tok[c]), int(creator_seg[c]),
                                   _dt.date(2022, 1 + c % 12, 1 + c % 28),
                                   "female" if c % 4 else "male") for c in range(n_creators)])
    if not cells:
        return EventTable([], [], [], [], [], []), roster
    f = np.concatenate([c[0] for c in cells]).astype(np.int64)
    m = np.concatenate([c[1] for c in cells]).astype(np.int64)
    ch = np.concatenate([c[2] for c in cells]).astype(np.int64)
    cnt = np.concatenate([c[3] for c in cells]).astype(np.int64)
    # merge duplicate cells (an extra slot can repeat a channel)
    key = (f * config.months + m) * n_creators + ch
    uniq, inv = np.unique(key, return_inverse=True)
    cnt = np.bincount(inv, weights=cnt).astype(np.int64)
    f, rest = np.divmod(uniq, config.months * n_creators)
    m, ch = np.divmod(rest, n_creators)

    start = MonthKey.parse(config.start)
    month_start = np.array([(start + i).start_epoch() for i in range(config.months + 1)],
                           dtype=np.int64)
    span = month_start[1:] - month_start[:-1]
    if config.split_messages:
        reps = cnt
        n_ev = np.ones(int(reps.sum()), dtype=np.int64)
    else:
        reps = np.ones(len(cnt), dtype=np.int64)
        n_ev = cnt
    u_time = counter_uniform(config.seed, f * n_creators + ch, m, _S_TIME)
    offset = (u_time * (span[m] - reps)).astype(np.int64)
    cell = np.repeat(np.arange(len(cnt)), reps)
    within = np.arange(len(cell)) - np.repeat(np.cumsum(reps) - reps, reps)
    ts = month_start[m][cell] + offset[cell] + within
    ev_f, ev_c = f[cell], ch[cell]
    order = np.lexsort((ev_c, ev_f, ts))
    ts, ev_f, ev_c, n_ev = ts[order], ev_f[order], ev_c[order], n_ev[order]

    def first_seen(ids):
        uniq, first, inv = np.unique(ids, return_index=True, return_inverse=True)
        rank = np.empty(len(uniq), dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
        return rank[inv], uniq[np.argsort(first, kind="stable")]

    ucode, ufans = first_seen(ev_f)
    ccode, uchans = first_seen(ev_c)
    table = EventTable(ucode, ccode, ts, n_ev, fans_tok[ufans].tolist(), chan_tok[uchans].tolist())
    return table, roster
