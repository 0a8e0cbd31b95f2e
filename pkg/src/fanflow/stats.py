"""Two-sample and paired tests with the Shapiro-Wilk selection gate.

Test statistics, exact null distributions and the Shapiro-Wilk
approximation are implemented here; only the Student t and normal
distribution functions come from scipy.special.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .errors import DegenerateDataError, NotApplicableError, PairingError

ALPHA = 0.05
MW_EXACT_MAX_PRODUCT = 64
WILCOXON_EXACT_MAX_N = 15


@dataclass
class TestResult:
    test: str
    statistic: float
    p_value: float
    effect_size_kind: str = "none"
    effect_size: Optional[float] = None
    n: tuple = ()
    gate_p: dict = field(default_factory=dict)
    method: str = ""
    df: Optional[float] = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        return d


def _sample(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(a)):
        raise ValueError("samples must be finite")
    return a


def _clip_p(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def _t_sf(t: float, df: float) -> float:
    return float(special.stdtr(df, -abs(t)))


def _norm_sf(z: float) -> float:
    return float(special.ndtr(-z))


def rankdata(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mid-ranks (1-based) and the sizes of tie groups."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    s = a[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    sizes = np.diff(np.r_[starts, len(s)])
    mid = starts + (sizes + 1) / 2.0
    ranks = np.empty(len(a))
    ranks[order] = np.repeat(mid, sizes)
    return ranks, sizes


# ---------------------------------------------------------------------------
# Shapiro-Wilk (Royston 1992 coefficients, Royston 1995 p-value)

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x: float) -> float:
    return sum(c * x ** i for i, c in enumerate(coef))


def _sw_coefficients(n: int) -> np.ndarray:
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    i = np.arange(1, n + 1)
    m = special.ndtri((i - 0.375) / (n + 0.25))
    mm = float(m @ m)
    u = 1.0 / math.sqrt(n)
    a = m / math.sqrt(mm)
    an = a[-1] + _poly(_C1, u)
    if n > 5:
        an1 = a[-2] + _poly(_C2, u)
        phi = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an ** 2 - 2 * an1 ** 2)
        a = m / math.sqrt(phi)
        a[-1], a[-2], a[0], a[1] = an, an1, -an, -an1
    else:
        phi = (mm - 2 * m[-1] ** 2) / (1 - 2 * an ** 2)
        a = m / math.sqrt(phi)
        a[-1], a[0] = an, -an
    return a


def shapiro_wilk(sample) -> tuple[float, float]:
    """Shapiro-Wilk W and its p-value for 3 <= n <= 5000.

    Raises :class:`NotApplicableError` outside that range and
    :class:`DegenerateDataError` for a constant sample.
    """
    x = np.sort(_sample(sample))
    n = len(x)
    if n < 3:
        raise NotApplicableError(f"Shapiro-Wilk needs n >= 3, got {n}")
    if n > 5000:
        raise NotApplicableError(f"Shapiro-Wilk approximation valid for n <= 5000, got {n}")
    ss = float(((x - x.mean()) ** 2).sum())
    if ss <= 0 or x[-1] - x[0] < 1e-19 * max(1.0, abs(x[0])):
        raise DegenerateDataError("Shapiro-Wilk undefined for a constant sample")
    a = _sw_coefficients(n)
    w = min(1.0, float((a @ x) ** 2 / ss))
    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, _clip_p(p)
    y = math.log(1.0 - w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return w, 0.0
        y = -math.log(gamma - y)
        mu, sigma = _poly(_C3, n), math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mu, sigma = _poly(_C5, ln), math.exp(_poly(_C6, ln))
    if y == -math.inf:
        return w, 1.0
    return w, _clip_p(_norm_sf((y - mu) / sigma))


# ---------------------------------------------------------------------------
# unpaired

def welch_t(a, b) -> TestResult:
    """Welch's unequal-variance t test, two-sided."""
    a, b = _sample(a), _sample(b)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise NotApplicableError("Welch t needs at least two observations per sample")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va <= 0 or vb <= 0:
        raise DegenerateDataError("Welch t needs positive variance in both samples")
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2 ** 2 / (qa ** 2 / (na - 1) + qb ** 2 / (nb - 1))
    return TestResult("welch_t", float(t), _clip_p(2 * _t_sf(t, df)), n=(na, nb),
                      method="t-distribution", df=float(df))


def _subset_sum_counts(values2: np.ndarray, k: int) -> np.ndarray:
    """counts[s] = number of k-subsets of ``values2`` (non-negative ints) summing to s."""
    total = int(values2.sum())
    dp = np.zeros((k + 1, total + 1), dtype=object)
    dp[0, 0] = 1
    for v in values2.tolist():
        for j in range(k, 0, -1):
            dp[j, v:] = dp[j, v:] + dp[j - 1, :total + 1 - v]
    return dp[k]


def _two_sided_from_counts(counts: np.ndarray, observed2: int, center2: float) -> float:
    """P(|X - center| >= |obs - center|) for X distributed as counts (in half-units)."""
    support = np.arange(len(counts))
    dev = abs(observed2 - center2)
    hit = np.abs(support - center2) >= dev - 1e-9
    num = int(sum(counts[hit]))
    den = int(sum(counts))
    return _clip_p(num / den)


def mann_whitney_u(a, b, method: str = "auto") -> TestResult:
    """Mann-Whitney U for sample ``a`` with rank-biserial effect size.

    U counts pairs where a beats b, ties as one half. ``method='auto'`` uses
    the exact permutation distribution (mid-ranks, so ties are handled) when
    n_a * n_b <= 64 and the tie-corrected normal approximation with
    continuity correction otherwise.
    """
    a, b = _sample(a), _sample(b)
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        raise NotApplicableError("Mann-Whitney U needs two non-empty samples")
    ranks, ties = rankdata(np.concatenate([a, b]))
    r_a = ranks[:na].sum()
    u = float(r_a - na * (na + 1) / 2.0)
    prod = na * nb
    r = abs(1.0 - 2.0 * u / prod)
    if method == "auto":
        method = "exact" if prod <= MW_EXACT_MAX_PRODUCT else "asymptotic"
    if method == "exact":
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        counts = _subset_sum_counts(ranks2, na)
        # U in half units: 2U = 2R_a - na(na+1)
        offset = na * (na + 1)
        observed2 = int(round(2 * r_a))
        center2 = prod + offset  # 2 * (E[U] + na(na+1)/2)
        p = _two_sided_from_counts(counts, observed2, center2)
    elif method == "asymptotic":
        n = na + nb
        tie_term = float((ties ** 3 - ties).sum())
        var = prod / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
        if var <= 0:
            p = 1.0
        else:
            dev = max(abs(u - prod / 2.0) - 0.5, 0.0)
            p = _clip_p(2 * _norm_sf(dev / math.sqrt(var)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return TestResult("mann_whitney_u", u, p, "rank_biserial", r, (na, nb), method=method)


# ---------------------------------------------------------------------------
# paired

def _diffs(diffs) -> np.ndarray:
    return _sample(diffs)


def paired_t(diffs) -> TestResult:
    """One-sample t on paired differences; Cohen's d = mean/sd and t = d*sqrt(n)."""
    d = _diffs(diffs)
    n = len(d)
    if n < 2:
        raise NotApplicableError("paired t needs at least two pairs")
    sd = d.std(ddof=1)
    if not sd > 0:
        raise DegenerateDataError("paired t undefined for zero-variance differences")
    cohen = float(d.mean() / sd)
    t = t_from_cohens_d(cohen, n)
    return TestResult("paired_t", t, _clip_p(2 * _t_sf(t, n - 1)), "cohens_d", cohen, (n,),
                      method="t-distribution", df=float(n - 1))


def t_from_cohens_d(d: float, n: int) -> float:
    return float(d * math.sqrt(n))


def wilcoxon_signed_rank(diffs, method: str = "auto") -> TestResult:
    """Wilcoxon signed-rank test on paired differences, W = min(W+, W-).

    Zero differences are dropped before ranking; tied magnitudes get
    mid-ranks. Exact enumeration of sign assignments for n <= 15, otherwise
    the tie-corrected normal approximation.
    """
    d = _diffs(diffs)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DegenerateDataError("Wilcoxon undefined when every difference is zero")
    ranks, ties = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    total = n * (n + 1) / 2.0
    if method == "auto":
        method = "exact" if n <= WILCOXON_EXACT_MAX_N else "asymptotic"
    if method == "exact":
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        counts = np.zeros(int(ranks2.sum()) + 1, dtype=object)
        counts[0] = 1
        for v in ranks2.tolist():
            shifted = np.zeros_like(counts)
            shifted[v:] = counts[:len(counts) - v]
            counts = counts + shifted
        p = _two_sided_from_counts(counts, int(round(2 * w_plus)), total)
    elif method == "asymptotic":
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float((ties ** 3 - ties).sum()) / 48.0
        p = 1.0 if var <= 0 else _clip_p(2 * _norm_sf(abs(w_plus - total / 2.0) / math.sqrt(var)))
    else:
        raise ValueError(f"unknown method {method!r}")
    res = TestResult("wilcoxon_signed_rank", w, p, n=(n,), method=method)
    res.gate_p["w_plus"] = w_plus
    res.gate_p["w_minus"] = w_minus
    return res


# ---------------------------------------------------------------------------
# selection procedures

def _sw_p(x) -> Optional[float]:
    try:
        return shapiro_wilk(x)[1]
    except NotApplicableError:
        return None


def compare_unpaired(a, b, alpha: float = ALPHA) -> TestResult:
    """Welch t if Shapiro-Wilk keeps normality (p >= alpha) for both samples,
    Mann-Whitney U otherwise (including when Shapiro-Wilk is not applicable)."""
    pa, pb = _sw_p(a), _sw_p(b)
    res = None
    if pa is not None and pb is not None and pa >= alpha and pb >= alpha:
        try:
            res = welch_t(a, b)
        except NotApplicableError:
            res = None
    if res is None:
        res = mann_whitney_u(a, b)
    res.gate_p.update({"shapiro_a": pa, "shapiro_b": pb})
    return res


def select_paired_test(p_sw: Optional[float], alpha: float = ALPHA) -> str:
    """Branch chosen from the Shapiro-Wilk p of the differences."""
    return "paired_t" if p_sw is not None and p_sw >= alpha else "wilcoxon_signed_rank"


def compare_paired(a, b, alpha: float = ALPHA) -> TestResult:
    """Gate on normality of a - b, then paired t or Wilcoxon signed-rank."""
    a, b = _sample(a), _sample(b)
    if len(a) != len(b):
        raise PairingError(f"paired samples differ in length ({len(a)} vs {len(b)})")
    d = a - b
    if not np.any(d != 0):
        raise DegenerateDataError("paired differences are all zero")
    p_sw = _sw_p(d)
    if select_paired_test(p_sw, alpha) == "paired_t":
        res = paired_t(d)
    else:
        res = wilcoxon_signed_rank(d)
    res.gate_p["shapiro_diff"] = p_sw
    return res
