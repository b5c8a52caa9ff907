"""Two-sample comparisons: Wilcoxon-Mann-Whitney rank sum and Welch t."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

ALTERNATIVES = ("less", "greater", "two-sided")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    alternative: str
    null: str
    alt: str
    n_a: int
    n_b: int
    df: float | None = None
    warning: str | None = None

    __test__ = False  # keep pytest from collecting this class


def _hypotheses(alternative: str, a: str = "A", b: str = "B") -> tuple[str, str]:
    return {
        "less": (f"{a}>{b}", f"{a}<{b}"),
        "greater": (f"{a}<{b}", f"{a}>{b}"),
        "two-sided": (f"{a}={b}", f"{a}!={b}"),
    }[alternative]


def _check(a, b, alternative, min_size=1):
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = a[~np.isnan(a)], b[~np.isnan(b)]
    if a.size < min_size or b.size < min_size:
        raise ValueError(f"each group needs at least {min_size} value(s)")
    return a, b


def rank_sum_components(a, b) -> tuple[float, float, float]:
    """Rank sum of ``a`` (midranks), its null mean and tie-corrected null variance."""
    na, nb = len(a), len(b)
    n = na + nb
    pooled = np.concatenate([a, b])
    ranks = sps.rankdata(pooled)
    w = float(ranks[:na].sum())
    mean = na * (n + 1) / 2.0
    _, counts = np.unique(pooled, return_counts=True)
    ties = float(np.sum(counts**3 - counts))
    var = na * nb / 12.0 * ((n + 1) - (ties / (n * (n - 1)) if n > 1 else 0.0))
    return w, mean, var


def rank_sum_test(a, b, alternative: str = "two-sided", labels=("A", "B")) -> TestResult:
    """Rank-sum test with normal approximation, tie and continuity corrections.

    ``alternative="less"`` means group ``a`` tends to be smaller than ``b``.
    """
    a, b = _check(a, b, alternative)
    w, mean, var = rank_sum_components(a, b)
    null, alt = _hypotheses(alternative, *labels)
    if var <= 0:
        p = 1.0 if alternative == "two-sided" else 0.5
        return TestResult(w, p, alternative, null, alt, a.size, b.size,
                          warning="all observations tied; test is degenerate")
    sd = math.sqrt(var)
    p_less = float(sps.norm.cdf((w - mean + 0.5) / sd))
    p_greater = float(sps.norm.sf((w - mean - 0.5) / sd))
    if alternative == "less":
        p = p_less
    elif alternative == "greater":
        p = p_greater
    else:
        p = min(1.0, 2.0 * min(p_less, p_greater))
    return TestResult(w, p, alternative, null, alt, a.size, b.size)


def t_test(a, b, alternative: str = "two-sided", labels=("A", "B")) -> TestResult:
    """Welch two-sample t test with Welch-Satterthwaite degrees of freedom."""
    a, b = _check(a, b, alternative, min_size=2)
    null, alt = _hypotheses(alternative, *labels)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            p = 1.0 if alternative == "two-sided" else 0.5
            return TestResult(0.0, p, alternative, null, alt, a.size, b.size,
                              warning="both groups have zero variance and equal means")
        t = math.copysign(math.inf, diff)
        p_less = 1.0 if t > 0 else 0.0
        p = {"less": p_less, "greater": 1.0 - p_less, "two-sided": 0.0}[alternative]
        return TestResult(t, p, alternative, null, alt, a.size, b.size,
                          warning="both groups have zero variance; statistic is infinite")
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    t = diff / math.sqrt(se2)
    if alternative == "less":
        p = float(sps.t.cdf(t, df))
    elif alternative == "greater":
        p = float(sps.t.sf(t, df))
    else:
        p = float(min(1.0, 2.0 * sps.t.sf(abs(t), df)))
    return TestResult(float(t), p, alternative, null, alt, a.size, b.size, df=float(df))
