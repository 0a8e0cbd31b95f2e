import math
import random

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fanflow.errors import DegenerateDataError, NotApplicableError, PairingError
from fanflow.stats import (compare_paired, compare_unpaired, mann_whitney_u, paired_t, rankdata,
                           select_paired_test, shapiro_wilk, t_from_cohens_d, welch_t,
                           wilcoxon_signed_rank)
from oracles import mw_exact_p, mw_u, wilcoxon_exact_p

# (sample, W, p) recorded from a reference Shapiro-Wilk implementation
SW_GOLDEN = {
    "twenty": ([2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 4.1, 3.9, 2.2, 6.0, 3.1, 4.8, 2.5, 3.7, 4.0,
                3.2, 5.1, 2.9, 3.6], 0.9689707357600884, 0.7330044255528915),
    "three": ([1.0, 2.0, 4.0], 0.9642857142857142, 0.6368868450289689),
    "doubling7": ([0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4], 0.7931897014985757, 0.035054766740024404),
    "squares11": ([float(i * i) for i in range(1, 12)], 0.9186320447076229, 0.30741084707592625),
    "sine50": ([math.sin(i) * i for i in range(1, 51)], 0.9844979909342051, 0.7498250714639234),
    "mod200": ([((i * 7919) % 1000) / 10 for i in range(1, 201)], 0.9522753438601276,
               3.1463729887408026e-06),
    "five": ([3.0, 3.1, 2.7, 3.9, 3.3], 0.946070875942507, 0.7091116481156615),
}

WELCH_A = [5.1, 4.9, 6.2, 5.8, 6.0, 5.5, 5.3, 6.1, 4.7, 5.9]
WELCH_B = [4.2, 4.8, 3.9, 5.1, 4.4, 4.0, 5.3, 4.6, 3.8, 4.9]
PAIRED_D = [0.8, 1.1, 0.3, 1.5, 0.9, 1.2, 0.4, 1.0, 0.7, 1.3]


@pytest.mark.parametrize("name", sorted(SW_GOLDEN))
def test_shapiro_wilk_golden(name):
    x, w_ref, p_ref = SW_GOLDEN[name]
    w, p = shapiro_wilk(x)
    assert abs(w - w_ref) <= 1e-3 and abs(p - p_ref) <= 1e-3
    # the port is far tighter than the acceptance tolerance
    assert abs(w - w_ref) <= 1e-8 and abs(p - p_ref) <= 1e-8


def test_shapiro_wilk_preconditions():
    with pytest.raises(NotApplicableError):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(NotApplicableError):
        shapiro_wilk(np.arange(5001.0))
    with pytest.raises(NotApplicableError):
        shapiro_wilk([3.0] * 10)
    with pytest.raises(DegenerateDataError):
        shapiro_wilk([3.0] * 10)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=60))
def test_shapiro_wilk_ranges(x):
    assume(np.ptp(x) > 1e-6 * max(1.0, np.abs(x).max()))
    w, p = shapiro_wilk(x)
    assert 0 < w <= 1 + 1e-12 and 0 <= p <= 1


# -- Welch ---------------------------------------------------------------------

def test_welch_golden():
    # 40-digit reference: t = 4.461469953101475483, df = 17.996940185761503473,
    # p = 0.00030169697443360290898
    r = welch_t(WELCH_A, WELCH_B)
    assert r.statistic == pytest.approx(4.461469953101475483, rel=1e-12)
    assert r.df == pytest.approx(17.996940185761503473, rel=1e-12)
    assert r.p_value == pytest.approx(0.00030169697443360290898, rel=1e-9)
    assert r.n == (10, 10)


def test_welch_identical_and_shift():
    r = welch_t(WELCH_A, WELCH_A)
    assert r.statistic == 0 and r.p_value == 1.0
    delta = 0.7
    r = welch_t([x + delta for x in WELCH_B], WELCH_B)
    s = np.std(WELCH_B, ddof=1)
    assert r.statistic == pytest.approx(delta / (s * math.sqrt(2 / 10)), rel=1e-12)
    assert welch_t(WELCH_B, [x + delta for x in WELCH_B]).statistic < 0


def test_welch_errors():
    with pytest.raises(NotApplicableError):
        welch_t([1.0], [1.0, 2.0])
    with pytest.raises(DegenerateDataError):
        welch_t([1.0, 1.0], [1.0, 2.0])


# -- Mann-Whitney ---------------------------------------------------------------

def test_mw_examples():
    r = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert r.statistic == 0 and r.effect_size == 1.0 and r.effect_size_kind == "rank_biserial"
    a = [3, 1, 2, 2]
    r = mann_whitney_u(a, list(reversed(a)))
    assert r.statistic == 8 and r.effect_size == 0.0


def _rand_samples(rng, max_prod):
    while True:
        na, nb = rng.randint(1, 10), rng.randint(1, 10)
        if na * nb <= max_prod:
            break
    pool = [rng.randint(0, 6) for _ in range(na + nb)]  # integers: plenty of ties
    return pool[:na], pool[na:]


@pytest.mark.parametrize("seed", range(40))
def test_mw_exact_equals_enumeration(seed):
    a, b = _rand_samples(random.Random(seed), 64)
    r = mann_whitney_u(a, b)
    assert r.method == "exact"
    assert r.statistic == mw_u(a, b)
    assert r.p_value == pytest.approx(mw_exact_p(a, b), abs=1e-12)


def test_mw_asymptotic_branch():
    rng = random.Random(3)
    a = [rng.gauss(0, 1) for _ in range(9)]
    b = [rng.gauss(0.5, 1) for _ in range(8)]
    r = mann_whitney_u(a, b)
    assert r.method == "asymptotic"
    # tie-free normal approximation with continuity correction, by hand
    u = mw_u(a, b)
    mu, sd = 36.0, math.sqrt(9 * 8 * 18 / 12)
    z = (abs(u - mu) - 0.5) / sd
    assert r.p_value == pytest.approx(math.erfc(z / math.sqrt(2)), rel=1e-12)


nums = st.lists(st.integers(-20, 20), min_size=1, max_size=12)


@settings(max_examples=80, deadline=None)
@given(nums, nums, st.integers(-50, 50))
def test_mw_symmetry_translation_bounds(a, b, shift):
    r = mann_whitney_u(a, b)
    s = mann_whitney_u(b, a)
    assert 0 <= r.p_value <= 1 and 0 <= r.effect_size <= 1
    assert r.p_value == pytest.approx(s.p_value, abs=1e-12)
    assert r.statistic + s.statistic == len(a) * len(b)
    moved = mann_whitney_u([x + shift for x in a], [x + shift for x in b])
    assert moved.statistic == r.statistic and moved.p_value == r.p_value


# -- paired -------------------------------------------------------------------

def test_paired_t_golden():
    # 40-digit reference: t = 7.6081862805956033646, d = 2.4059197509527029338,
    # p = 0.000032985102355164675614
    r = paired_t(PAIRED_D)
    assert r.statistic == pytest.approx(7.6081862805956033646, rel=1e-12)
    assert r.effect_size == pytest.approx(2.4059197509527029338, rel=1e-12)
    assert r.p_value == pytest.approx(0.000032985102355164675614, rel=1e-9)
    assert r.effect_size_kind == "cohens_d"


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=40))
def test_paired_t_identity_exact(d):
    assume(np.std(d, ddof=1) > 1e-9)
    r = paired_t(d)
    assert r.statistic == r.effect_size * math.sqrt(len(d))
    assert 0 <= r.p_value <= 1
    neg = paired_t([-x for x in d])
    assert neg.statistic == -r.statistic and neg.p_value == r.p_value


def test_paired_t_degenerate():
    with pytest.raises(DegenerateDataError):
        paired_t([0.0, 0.0, 0.0])
    with pytest.raises(NotApplicableError):
        paired_t([1.0])


def test_wilcoxon_examples():
    r = wilcoxon_signed_rank([1.0, 2.5, 0.3, 4.0])
    assert r.statistic == 0
    r = wilcoxon_signed_rank([1.0, -1.0, 2.0, -2.0, 3.0, -3.0])
    assert r.gate_p["w_plus"] == r.gate_p["w_minus"]
    with pytest.raises(DegenerateDataError):
        wilcoxon_signed_rank([0.0, 0.0])


@pytest.mark.parametrize("seed", range(40))
def test_wilcoxon_exact_equals_enumeration(seed):
    rng = random.Random(seed)
    d = [rng.randint(-5, 5) for _ in range(rng.randint(1, 15))]
    if not any(d):
        d.append(1)
    r = wilcoxon_signed_rank(d)
    w, p = wilcoxon_exact_p(d)
    assert r.method == "exact"
    assert r.statistic == w
    assert r.p_value == pytest.approx(p, abs=1e-12)


def test_wilcoxon_asymptotic_branch():
    d = [float(i) * (-1) ** (i % 3 == 0) for i in range(1, 21)]
    r = wilcoxon_signed_rank(d)
    assert r.method == "asymptotic"
    n = 20
    wp = sum(i for i in range(1, 21) if i % 3 != 0)
    z = abs(wp - n * (n + 1) / 4) / math.sqrt(n * (n + 1) * (2 * n + 1) / 24)
    assert r.p_value == pytest.approx(math.erfc(z / math.sqrt(2)), rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-10, 10), min_size=1, max_size=25))
def test_wilcoxon_negation_invariance(d):
    assume(any(d))
    r = wilcoxon_signed_rank(d)
    s = wilcoxon_signed_rank([-x for x in d])
    assert r.statistic == s.statistic and r.p_value == s.p_value
    assert 0 <= r.p_value <= 1


# -- selection ----------------------------------------------------------------

def test_gate_values():
    assert select_paired_test(0.060) == "paired_t"
    assert select_paired_test(0.05) == "paired_t"
    assert select_paired_test(0.001) == "wilcoxon_signed_rank"
    assert select_paired_test(None) == "wilcoxon_signed_rank"


def test_compare_unpaired_branches():
    # two-point mixtures: reference SW p = 0.00025 and 0.00017
    r = compare_unpaired([0, 0, 0, 0, 0, 10, 10, 10, 10, 10], [1, 1, 1, 1, 1, 1, 9, 9, 9, 9])
    assert r.test == "mann_whitney_u"
    # reference SW p = 0.467 and 0.686
    r = compare_unpaired(WELCH_A, WELCH_B)
    assert r.test == "welch_t"
    assert r.gate_p["shapiro_a"] == pytest.approx(0.4666742854692097, abs=1e-3)
    assert r.gate_p["shapiro_b"] == pytest.approx(0.6864296414600582, abs=1e-3)
    r = compare_unpaired([1.0, 2.0], WELCH_B)
    assert r.test == "mann_whitney_u" and r.gate_p["shapiro_a"] is None


def test_compare_paired():
    b = [float(i) for i in range(10)]
    r = compare_paired([x + d for x, d in zip(b, PAIRED_D)], b)
    assert r.test == "paired_t"  # reference SW p of the differences = 0.930
    assert r.gate_p["shapiro_diff"] == pytest.approx(0.9304873956226649, abs=1e-3)
    skewed = [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.2, 0.2, 5.0, 9.0]
    r = compare_paired([x + d for x, d in zip(b, skewed)], b)
    assert r.test == "wilcoxon_signed_rank" and r.gate_p["shapiro_diff"] < 0.05
    with pytest.raises(PairingError):
        compare_paired([1, 2, 3], [1, 2])
    with pytest.raises(DegenerateDataError):
        compare_paired(b, b)


def test_cohens_d_identity():
    assert t_from_cohens_d(3.25, 38) == pytest.approx(20.03, abs=0.01)


def test_rankdata_midranks():
    ranks, ties = rankdata(np.array([10.0, 20.0, 10.0, 30.0, 20.0, 20.0]))
    assert ranks.tolist() == [1.5, 4.0, 1.5, 6.0, 4.0, 4.0]
    assert ties.tolist() == [2, 3, 1]  # tie groups in sorted-value order
