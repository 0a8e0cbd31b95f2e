import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fanflow.errors import ConfigError
from fanflow.ingest import AGENCY, INDEPENDENT, EventTable
from fanflow.months import MonthKey, MonthWindow
from fanflow.panel import (build_panel, creator_metrics, oshi, oshi_switch, retention,
                           retention_rate, retention_table, run_lengths, switch_table)
from helpers import make_roster, month_ts, panel_from, random_corpus
from oracles import BrutePanel, month_range

ROSTER = {"c1": AGENCY, "c2": AGENCY, "cA": AGENCY, "cB": AGENCY, "i1": INDEPENDENT}


def fan_months(active_months, user="u1", channel="c1", n_months=5):
    """Fan active (one message on channel) in the given 1-based months."""
    events = [(user, channel, month_ts(m - 1, 3), 1) for m in active_months]
    return panel_from(events, ROSTER, n_months)


def cells(p, user):
    return {(c, str(m)): n for (c, m), n in p.cells(user).items()}


def M(i):
    return str(MonthKey.of(2023, 1) + (i - 1))


# -- build_panel --------------------------------------------------------------

def test_three_events_one_cell():
    p = panel_from([("u1", "c1", month_ts(0, d), 1) for d in (2, 3, 4)], ROSTER, 1)
    assert cells(p, "u1") == {("c1", "2023-01"): 3}


def test_month_boundary():
    feb1 = month_ts(1)
    p = panel_from([("u1", "c1", feb1 - 1, 1), ("u1", "c1", feb1, 1)], ROSTER, 2)
    assert cells(p, "u1") == {("c1", "2023-01"): 1, ("c1", "2023-02"): 1}


def test_twenty_event_fixture():
    # 2 users x 2 channels x 2 months, tabulated by hand
    plan = {("u1", "c1", 0): [1, 2, 1], ("u1", "c2", 0): [2, 2], ("u1", "c1", 1): [1, 1, 1, 1],
            ("u2", "c2", 0): [2, 2], ("u2", "c1", 1): [3, 1, 1, 1, 1], ("u2", "c2", 1): [1, 1, 1, 1]}
    events = [(u, c, month_ts(m, 1 + i), n) for (u, c, m), ns in plan.items()
              for i, n in enumerate(ns)]
    assert len(events) == 20
    p = panel_from(events, ROSTER, 2)
    assert cells(p, "u1") == {("c1", "2023-01"): 4, ("c2", "2023-01"): 4, ("c1", "2023-02"): 4}
    assert cells(p, "u2") == {("c2", "2023-01"): 4, ("c1", "2023-02"): 7, ("c2", "2023-02"): 4}
    assert len(p.count) == 6 and p.count.min() > 0


def test_exclusions_reported():
    events = [("u1", "c1", month_ts(0), 1), ("u1", "c1", month_ts(5), 1),
              ("u1", "zz", month_ts(0), 1)]
    p = panel_from(events, ROSTER, 2)
    assert (p.report.out_of_window, p.report.unknown_channel) == (1, 1)
    assert p.total_messages() == 1


def test_empty_window_fatal():
    with pytest.raises(ConfigError):
        build_panel(EventTable.from_events([("u", "c1", month_ts(0), 1)]), make_roster(ROSTER),
                    MonthWindow(MonthKey.of(2023, 2), MonthKey.of(2023, 1)))


# -- oshi ---------------------------------------------------------------------

def test_oshi_examples():
    ev = [("u1", "c1", month_ts(0), 5), ("u1", "c2", month_ts(0), 3),
          ("u2", "cB", month_ts(0), 4), ("u2", "cA", month_ts(0, 2), 4)]
    p = panel_from(ev, ROSTER, 2)
    assert oshi(p, "u1", "2023-01") == "c1"
    assert oshi(p, "u2", "2023-01") == "cA"
    assert oshi(p, "u1", "2023-02") is None


def test_tie_break_uses_tokens_not_ingest_order():
    # "b" is interned first but "a" wins the tie lexicographically
    ev = [("u", "b", month_ts(0), 2), ("u", "a", month_ts(0), 2), ("u", "B", month_ts(0), 2)]
    p = panel_from(ev, {"a": 1, "b": 1, "B": 1}, 1)
    assert oshi(p, "u", "2023-01") == "B"  # bytewise: uppercase sorts first


# -- retention, switch, runs --------------------------------------------------

def test_retention_examples():
    assert retention(fan_months([1, 2, 3]), "u1", M(1), 2) == 1
    assert retention(fan_months([1, 3]), "u1", M(1), 2) == 0


def test_retention_not_evaluable():
    p = fan_months([1, 2, 3], n_months=3)
    assert retention(p, "u1", M(2), 2) is None   # horizon past window
    assert retention(p, "u1", M(1), 2) == 1
    assert retention(fan_months([2, 3]), "u1", M(1), 1) is None  # inactive at m
    with pytest.raises(ValueError):
        retention(p, "u1", M(1), 0)


def test_switch_examples():
    stay = [("u1", "c1", month_ts(0), 1), ("u1", "c1", month_ts(1), 1)]
    move = [("u1", "c1", month_ts(0), 1), ("u1", "c2", month_ts(1), 1)]
    assert oshi_switch(panel_from(stay, ROSTER, 2), "u1", M(1)) == 0
    assert oshi_switch(panel_from(move, ROSTER, 2), "u1", M(1)) == 1
    assert oshi_switch(panel_from(move[:1], ROSTER, 2), "u1", M(1)) is None


def test_switch_creator_mean_one_third():
    ev = [("f1", "c1", month_ts(0), 1), ("f1", "c1", month_ts(1), 1),
          ("f2", "c1", month_ts(0), 1), ("f2", "c1", month_ts(1), 1),
          ("f3", "c1", month_ts(0), 1), ("f3", "c2", month_ts(1), 1)]
    p = panel_from(ev, ROSTER, 2)
    cm = creator_metrics(p).set_index("channel")
    assert cm.loc["c1", "oshi_switch_probability"] == pytest.approx(1 / 3, abs=0)
    st_ = switch_table(p)
    assert st_.to_dict("records") == [{"channel": "c1", "month": "2023-01", "fans": 3,
                                       "switches": 1, "rate": 1 / 3}]


def test_run_length_examples():
    assert run_lengths(fan_months([1, 2, 3]), "u1", M(3)) == (3, 3)
    assert run_lengths(fan_months([1, 2, 4]), "u1", M(4)) == (1, 2)
    assert run_lengths(fan_months([1, 2, 4]), "u1", M(3)) == (0, 2)


# -- aggregates ---------------------------------------------------------------

def test_retention_rate_examples():
    ev = []
    for f, months in enumerate([[0, 1, 2], [0, 1, 2], [0, 1, 2], [0, 2]]):
        ev += [(f"f{f}", "c1", month_ts(m), 1) for m in months]
    ev.append(("g", "i1", month_ts(1), 1))
    p = panel_from(ev, ROSTER, 3)
    r = retention_rate(p, "agency", M(1), 2)
    assert (r.count, r.retained, r.rate) == (4, 3, 0.75)
    r = retention_rate(p, "independent", M(1), 2)
    assert (r.count, r.rate) == (0, None)


def test_retention_table_drops_unevaluable_months():
    p = fan_months([1, 2, 3], n_months=3)
    tab = retention_table(p, (1, 2))
    assert sorted(set(zip(tab.k, tab.month))) == [(1, M(1)), (1, M(2)), (2, M(1))]


# -- oracle equivalence on random panels --------------------------------------

@pytest.mark.parametrize("seed", range(6))
def test_matches_brute_force(seed):
    rng = random.Random(seed)
    n_months = rng.randint(2, 8)
    events, chans = random_corpus(rng, rng.randint(20, 60), rng.randint(2, 8), n_months)
    p = panel_from(events, chans, n_months)
    months = month_range("2023-01", M(n_months))
    bp = BrutePanel(events, chans, months)
    assert sorted(p.user_tokens) == bp.users
    for u in bp.users:
        for i, mo in enumerate(months):
            assert oshi(p, u, mo) == bp.oshi(u, mo)
            assert oshi_switch(p, u, mo) == bp.switch(u, i)
            assert run_lengths(p, u, mo) == bp.runs(u, i)
            for k in (1, 2, 3):
                assert retention(p, u, mo, k) == bp.retention(u, i, k)
    cm = creator_metrics(p).set_index("channel")
    ret2 = bp.creator_mean(lambda u, i: bp.retention(u, i, 2))
    sw = bp.creator_mean(lambda u, i: bp.switch(u, i))
    runs = bp.creator_mean(lambda u, i: bp.runs(u, i)[1])
    for c in cm.index:
        for frame_col, ref in (("two_month_retention", ret2), ("oshi_switch_probability", sw),
                               ("longest_active_run", runs)):
            got = cm.loc[c, frame_col]
            if c in ref:
                assert got == pytest.approx(ref[c], rel=1e-12)
            else:
                assert np.isnan(got)


# -- properties ---------------------------------------------------------------

cells_st = st.lists(st.tuples(st.integers(0, 5), st.sampled_from(["c1", "c2", "cA", "i1"]),
                              st.integers(0, 5), st.integers(1, 5)), min_size=1, max_size=60)


def _panel(cells, scale=1):
    events = [(f"u{u}", c, month_ts(m, 2), n * scale) for u, c, m, n in cells]
    return events, panel_from(events, ROSTER, 6)


@settings(max_examples=80, deadline=None)
@given(cells_st)
def test_retention_monotone_in_k(cells):
    _, p = _panel(cells)
    for k in (1, 2, 3, 4):
        r1, e1 = p.retention_matrix(k)
        r2, e2 = p.retention_matrix(k + 1)
        both = e1 & e2
        assert np.all(r2[both] <= r1[both])


@settings(max_examples=80, deadline=None)
@given(cells_st, st.integers(2, 7))
def test_oshi_invariant_under_scaling(cells, factor):
    _, a = _panel(cells)
    _, b = _panel(cells, factor)
    assert np.array_equal(a.oshi_matrix, b.oshi_matrix)


@settings(max_examples=80, deadline=None)
@given(cells_st)
def test_sum_conservation_and_partition(cells):
    events, p = _panel(cells)
    assert p.total_messages() == sum(e[3] for e in events)
    assert np.all(p.count > 0)
    has_oshi = p.oshi_matrix >= 0
    assert np.array_equal(has_oshi, p.active)
    _, ev = p.retention_matrix(1)
    assert not np.any(ev & ~p.active)
