"""Descriptive statistics, regression metrics and rank-based tests.

Conventions, fixed so results are reproducible:

* quantiles interpolate linearly between order statistics;
* standard deviations use the n-1 denominator;
* Wilcoxon drops zero differences, uses average ranks for ties, reports
  W = min(W+, W-) and a two-sided p (exact up to 25 non-zero pairs);
* Friedman and Spearman use average ranks with tie corrections.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .errors import InvalidInputError

WILCOXON_EXACT_MAX_N = 25
FRIEDMAN_EXACT_MAX_PERMUTATIONS = 2_000_000


@dataclass(frozen=True)
class SummaryRow:
    n: int
    mean: float
    mae: float
    median: float
    std: float
    min: float
    q25: float
    q75: float
    max: float
    iqr: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class RegressionMetrics:
    mse: float
    mae: float
    r2: float | None  # None when the actual values have zero variance

    def as_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "r2": self.r2}


@dataclass(frozen=True)
class TestResult:
    statistic: float | None
    p_value: float | None
    method: str
    n: int
    df: int | None = None
    degenerate: bool = False
    note: str = ""

    __test__ = False  # not a pytest class

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n": self.n,
            "df": self.df,
            "degenerate": self.degenerate,
            "note": self.note,
        }


def _finite_array(values, name: str = "values") -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def summarize(values) -> SummaryRow:
    arr = _finite_array(values)
    if arr.size == 0:
        raise InvalidInputError("cannot summarize an empty sample")
    q25, median, q75 = np.quantile(arr, [0.25, 0.5, 0.75])
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return SummaryRow(
        n=int(arr.size),
        mean=float(arr.mean()),
        mae=float(np.abs(arr).mean()),
        median=float(median),
        std=std,
        min=float(arr.min()),
        q25=float(q25),
        q75=float(q75),
        max=float(arr.max()),
        iqr=float(q75 - q25),
    )


def regression_metrics(actual, predicted) -> RegressionMetrics:
    a = _finite_array(actual, "actual")
    p = _finite_array(predicted, "predicted")
    if a.size == 0 or a.size != p.size:
        raise InvalidInputError("actual and predicted must have equal, non-zero lengths")
    resid = a - p
    ss_res = float((resid**2).sum())
    ss_tot = float(((a - a.mean()) ** 2).sum())
    r2 = None if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RegressionMetrics(mse=ss_res / a.size, mae=float(np.abs(resid).mean()), r2=r2)


def rankdata(values) -> np.ndarray:
    """Average ranks (1-based); tied values share the mean of their positions."""
    return sps.rankdata(np.asarray(values, dtype=float), method="average")


def _tie_term(values: np.ndarray) -> float:
    counts = np.array(list(Counter(values.tolist()).values()), dtype=float)
    return float((counts**3 - counts).sum())


def _signed_rank_null_cdf(ranks: np.ndarray, w: float) -> float:
    """P(W+ <= w) when each rank carries a fair random sign.

    Average ranks are multiples of 1/2, so the distribution lives on a
    half-integer lattice; count subsets by dynamic programming on 2*rank.
    """
    doubled = np.rint(2 * ranks).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    threshold = int(math.floor(2 * w + 1e-9))
    return float(counts[: threshold + 1].sum() / 2.0 ** len(doubled))


def wilcoxon_signed_rank(a, b=None) -> TestResult:
    """Paired two-sided signed-rank test on ``a - b`` (or on ``a`` alone)."""
    x = _finite_array(a, "a")
    if b is not None:
        y = _finite_array(b, "b")
        if x.size != y.size:
            raise InvalidInputError("paired samples must have equal length")
        x = x - y
    if x.size == 0:
        raise InvalidInputError("need at least one pair")
    d = x[x != 0.0]
    n = int(d.size)
    if n == 0:
        return TestResult(0.0, 1.0, "wilcoxon", 0, degenerate=True, note="all differences zero")

    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= WILCOXON_EXACT_MAX_N:
        p = min(1.0, 2.0 * _signed_rank_null_cdf(ranks, w))
        note = "exact"
    else:
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(d)) / 48.0
        if var <= 0:
            return TestResult(w, 1.0, "wilcoxon", n, degenerate=True, note="zero null variance")
        z = max(0.0, abs(w - mean) - 0.5) / math.sqrt(var)
        p = min(1.0, 2.0 * float(sps.norm.sf(z)))
        note = "normal approximation, tie and continuity corrected"
    return TestResult(w, p, "wilcoxon", n, note=note)


def _friedman_statistic(ranks: np.ndarray) -> float | None:
    n, k = ranks.shape
    rank_sums = ranks.sum(axis=0)
    chi2 = 12.0 / (n * k * (k + 1)) * float((rank_sums**2).sum()) - 3.0 * n * (k + 1)
    ties = sum(_tie_term(row) for row in ranks)
    denom = 1.0 - ties / (n * (k**3 - k))
    if denom <= 1e-12:
        return None
    return chi2 / denom


def _friedman_exact_p(ranks: np.ndarray, observed: float) -> float:
    """Permutation p-value, convolving the rank-sum distribution row by row."""
    n, k = ranks.shape
    dist: dict[tuple, int] = {(0.0,) * k: 1}
    for row in ranks:
        perms = list(itertools.permutations(row.tolist()))
        nxt: Counter = Counter()
        for sums, count in dist.items():
            for perm in perms:
                nxt[tuple(s + r for s, r in zip(sums, perm))] += count
        dist = dict(nxt)
    ties = sum(_tie_term(row) for row in ranks)
    denom = 1.0 - ties / (n * k * (k * k - 1))
    total = 0
    hits = 0
    scale = 12.0 / (n * k * (k + 1))
    for sums, count in dist.items():
        stat = (scale * sum(s * s for s in sums) - 3.0 * n * (k + 1)) / denom
        total += count
        if stat >= observed - 1e-9:
            hits += count
    return hits / total


def friedman(matrix, exact: bool = False) -> TestResult:
    """Friedman test on an (n subjects x k conditions) matrix.

    The p-value comes from the chi-square upper tail, or from full
    within-row permutation when ``exact`` is set (tiny designs only).
    """
    try:
        m = np.array(matrix, dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"ragged matrix: {exc}") from None
    if m.ndim != 2:
        raise InvalidInputError("matrix must be two-dimensional")
    n, k = m.shape
    if n < 2 or k < 2:
        raise InvalidInputError("need at least 2 subjects and 2 conditions")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix has missing or non-finite entries")
    ranks = np.vstack([rankdata(row) for row in m])
    stat = _friedman_statistic(ranks)
    if stat is None:
        return TestResult(0.0, 1.0, "friedman", n, df=k - 1, degenerate=True, note="all rows fully tied")
    stat = max(stat, 0.0)
    if exact:
        if math.factorial(k) ** n > FRIEDMAN_EXACT_MAX_PERMUTATIONS:
            raise InvalidInputError("design too large for exact permutation p-value")
        p = _friedman_exact_p(ranks, stat)
        note = "exact permutation"
    else:
        p = float(sps.chi2.sf(stat, k - 1))
        note = "chi-square approximation"
    return TestResult(stat, p, "friedman", n, df=k - 1, note=note)


def spearman(x, y) -> TestResult:
    xa = _finite_array(x, "x")
    ya = _finite_array(y, "y")
    if xa.size != ya.size or xa.size < 3:
        raise InvalidInputError("spearman needs equal-length samples of at least 3")
    rx = rankdata(xa)
    ry = rankdata(ya)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    sxx = float((rx * rx).sum())
    syy = float((ry * ry).sum())
    n = int(xa.size)
    if sxx == 0.0 or syy == 0.0:
        return TestResult(None, None, "spearman", n, degenerate=True, note="zero rank variance")
    rho = float((rx * ry).sum()) / math.sqrt(sxx * syy)
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = float(2.0 * sps.t.sf(abs(t), n - 2))
    return TestResult(rho, min(1.0, p), "spearman", n, df=n - 2, note="t approximation")


def bonferroni(p_values: Sequence[float], m: int | None = None) -> list[float]:
    ps = [float(p) for p in p_values]
    if m is None:
        m = len(ps)
    if m < len(ps):
        raise InvalidInputError(f"m={m} is smaller than the number of p-values ({len(ps)})")
    return [min(1.0, m * p) for p in ps]


@dataclass(frozen=True)
class DistanceBin:
    lo: float
    hi: float  # math.inf for the overflow bin
    summary: SummaryRow | None  # None marks an empty bin

    @property
    def label(self) -> str:
        if math.isinf(self.hi):
            return f">={self.lo:g}"
        return f"{self.lo:g}-{self.hi:g}"

    @property
    def empty(self) -> bool:
        return self.summary is None

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "lo": self.lo,
            "hi": None if math.isinf(self.hi) else self.hi,
            "empty": self.empty,
            "summary": None if self.summary is None else self.summary.as_dict(),
        }


def bin_by_distance(errors, distances, edges: Sequence[float] = (0.0, 10.0, 20.0, 30.0)) -> list[DistanceBin]:
    """Summaries of ``errors`` in half-open distance bins, plus an overflow bin."""
    e = _finite_array(errors, "errors")
    d = _finite_array(distances, "distances")
    if e.size != d.size:
        raise InvalidInputError("errors and distances must have equal length")
    edges = [float(x) for x in edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise InvalidInputError("bin edges must be strictly increasing")
    if np.any(d < edges[0]):
        raise InvalidInputError(f"distance below first bin edge {edges[0]}")
    bounds = list(zip(edges, edges[1:])) + [(edges[-1], math.inf)]
    out = []
    for lo, hi in bounds:
        sel = e[(d >= lo) & (d < hi)]
        out.append(DistanceBin(lo, hi, summarize(sel) if sel.size else None))
    return out
