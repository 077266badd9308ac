import itertools
import math

import numpy as np
import pytest
import scipy.stats as sps
from hypothesis import given
from hypothesis import strategies as st

from curbsight.errors import InvalidInputError
from curbsight.stats import (
    bin_by_distance,
    bonferroni,
    friedman,
    rankdata,
    regression_metrics,
    spearman,
    summarize,
    wilcoxon_signed_rank,
)


def enumerated_wilcoxon_p(d):
    """Two-sided exact p by listing all 2^n sign patterns."""
    d = np.asarray(d, dtype=float)
    d = d[d != 0]
    ranks = sps.rankdata(np.abs(d))
    w_plus = ranks[d > 0].sum()
    w = min(w_plus, ranks.sum() - w_plus)
    hits = sum(1 for signs in itertools.product((0, 1), repeat=len(d)) if np.dot(signs, ranks) <= w + 1e-9)
    return min(1.0, 2.0 * hits / 2 ** len(d))


def permutation_friedman_p(m):
    """Share of within-row permutations whose statistic reaches the observed one."""
    m = np.asarray(m, dtype=float)
    n, k = m.shape

    def stat(mat):
        r = np.vstack([sps.rankdata(row) for row in mat])
        return 12.0 / (n * k * (k + 1)) * (r.sum(axis=0) ** 2).sum() - 3.0 * n * (k + 1)

    observed = stat(m)
    rows = [list(itertools.permutations(row)) for row in m]
    hits = total = 0
    for combo in itertools.product(*rows):
        total += 1
        hits += stat(np.array(combo)) >= observed - 1e-9
    return hits / total


class TestSummary:
    def test_matches_numpy(self):
        x = [3.0, -1.0, 4.0, 1.5, 9.0, 2.0]
        s = summarize(x)
        assert s.n == 6
        assert s.mean == pytest.approx(np.mean(x))
        assert s.mae == pytest.approx(np.mean(np.abs(x)))
        assert s.std == pytest.approx(np.std(x, ddof=1))
        assert s.iqr == pytest.approx(np.quantile(x, 0.75) - np.quantile(x, 0.25))
        assert (s.min, s.max, s.median) == (-1.0, 9.0, 2.5)

    def test_one_to_five_quartiles(self):
        s = summarize([1, 2, 3, 4, 5])
        assert (s.median, s.q25, s.q75, s.iqr) == (3.0, 2.0, 4.0, 2.0)

    def test_constant(self):
        s = summarize([2.5] * 7)
        assert (s.std, s.iqr, s.mean, s.median) == (0.0, 0.0, 2.5, 2.5)

    @given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=40), st.randoms(use_true_random=False))
    def test_permutation_and_sign_flip(self, xs, rnd):
        shuffled = rnd.sample(xs, len(xs))
        a, b = summarize(xs), summarize(shuffled)
        assert (a.median, a.q25, a.q75, a.min, a.max) == (b.median, b.q25, b.q75, b.min, b.max)
        assert a.q25 <= a.median <= a.q75
        flipped = [x if rnd.random() < 0.5 else -x for x in xs]
        assert summarize(flipped).mae == pytest.approx(a.mae, rel=1e-12, abs=1e-9)

    def test_single_value(self):
        s = summarize([2.0])
        assert s.std == 0.0 and s.iqr == 0.0

    @pytest.mark.parametrize("bad", [[], [1.0, math.nan]])
    def test_rejects(self, bad):
        with pytest.raises(InvalidInputError):
            summarize(bad)


class TestRegressionMetrics:
    def test_perfect(self):
        m = regression_metrics([1, 2, 3], [1, 2, 3])
        assert (m.mse, m.mae, m.r2) == (0.0, 0.0, 1.0)

    def test_hand_case(self):
        m = regression_metrics([1, 2, 3, 4], [1, 3, 3, 2])
        assert m.mse == pytest.approx(5 / 4)
        assert m.mae == pytest.approx(3 / 4)
        assert m.r2 == pytest.approx(1 - 5 / 5)

    def test_mean_prediction(self):
        m = regression_metrics([1, 2, 3], [2, 2, 2])
        assert m.mse == pytest.approx(2 / 3) and m.mae == pytest.approx(2 / 3)
        assert m.r2 == pytest.approx(0.0, abs=1e-15)

    def test_constant_target_has_no_r2(self):
        assert regression_metrics([2, 2], [1, 3]).r2 is None


def test_rankdata_ties():
    assert list(rankdata([10, 20, 20, 5])) == [2.0, 3.5, 3.5, 1.0]


class TestWilcoxon:
    def test_all_zero_differences(self):
        r = wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0])
        assert r.degenerate and r.p_value == 1.0

    def test_smallest_n_all_positive(self):
        # n = 5, every difference positive: p = 2 / 32
        r = wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0])
        assert r.statistic == 0.0
        assert r.p_value == pytest.approx(0.0625, abs=1e-15)

    def test_unequal_lengths(self):
        with pytest.raises(InvalidInputError):
            wilcoxon_signed_rank([1.0], [1.0, 2.0])

    def test_matches_enumeration(self):
        rng = np.random.default_rng(20240611)
        for _ in range(200):
            n = int(rng.integers(1, 11))
            # rounding forces ties and zeros
            d = np.round(rng.normal(0, 1, n), 1)
            if not np.any(d):
                continue
            assert wilcoxon_signed_rank(d).p_value == pytest.approx(enumerated_wilcoxon_p(d), abs=1e-12)

    def test_matches_scipy_exact_without_ties(self):
        rng = np.random.default_rng(7)
        for n in range(5, 26):
            d = rng.normal(0.3, 1, n)
            ref = sps.wilcoxon(d, method="exact")
            got = wilcoxon_signed_rank(d)
            assert got.statistic == pytest.approx(ref.statistic)
            assert got.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_normal_approximation_large_n(self):
        rng = np.random.default_rng(3)
        d = rng.normal(0.4, 1, 60)
        ref = sps.wilcoxon(d, method="approx", correction=True)
        got = wilcoxon_signed_rank(d)
        assert got.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=12))
    def test_symmetric_under_sign_flip(self, d):
        a = wilcoxon_signed_rank(d)
        b = wilcoxon_signed_rank([-x for x in d])
        assert a.p_value == pytest.approx(b.p_value, abs=1e-12)
        assert 0.0 <= a.p_value <= 1.0


class TestFriedman:
    def test_fully_tied_rows(self):
        r = friedman([[1, 1, 1], [2, 2, 2]])
        assert r.degenerate and r.statistic == 0.0 and r.p_value == 1.0

    def test_hand_case(self):
        # identical ordering in all 4 rows: rank sums 4, 8, 12 give chi2 = 8
        r = friedman([[1, 2, 3], [4, 5, 6], [0, 7, 9], [2, 3, 4]])
        assert r.statistic == pytest.approx(8.0, abs=1e-12)
        assert r.p_value == pytest.approx(math.exp(-4.0), rel=1e-12)
        assert r.df == 2

    def test_three_by_three_consistent_ordering(self):
        # rank sums 3, 6, 9
        r = friedman([[1, 2, 3], [10, 20, 30], [5, 6, 7]])
        assert r.statistic == pytest.approx(6.0, abs=1e-12)
        assert r.df == 2

    @given(st.integers(0, 2**32 - 1))
    def test_invariant_under_monotone_transform(self, seed):
        m = np.random.default_rng(seed).normal(size=(6, 4))
        a, b = friedman(m), friedman(np.exp(3.0 * m) - 2.0)
        assert a.statistic == pytest.approx(b.statistic, abs=1e-12)
        assert a.p_value == pytest.approx(b.p_value, abs=1e-12)

    def test_statistic_matches_scipy(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m = np.round(rng.normal(size=(int(rng.integers(3, 30)), 4)), 1)
            ref = sps.friedmanchisquare(*m.T)
            got = friedman(m)
            assert got.statistic == pytest.approx(ref.statistic, rel=1e-9)
            assert got.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_exact_matches_permutation_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(2, 5))
            m = rng.normal(size=(n, 3))
            assert friedman(m, exact=True).p_value == pytest.approx(permutation_friedman_p(m), abs=1e-12)

    def test_exact_refuses_large_design(self):
        with pytest.raises(InvalidInputError):
            friedman(np.arange(60.0).reshape(12, 5), exact=True)

    @pytest.mark.parametrize("bad", [[[1, 2, 3]], [[1], [2]], [[1, 2], [3, math.nan]]])
    def test_rejects(self, bad):
        with pytest.raises(InvalidInputError):
            friedman(bad)


class TestSpearman:
    X = [1, 2, 3, 4, 5]

    @pytest.mark.parametrize(
        "y, rho",
        [([2, 4, 6, 8, 10], 1.0), ([5, 4, 3, 2, 1], -1.0), ([3, 2, 1, 4, 5], 0.6), ([2, 5, 3, 1, 4], 0.0)],
    )
    def test_hand_cases(self, y, rho):
        assert spearman(self.X, y).statistic == pytest.approx(rho, abs=1e-12)

    def test_four_point_hand_case(self):
        # d = (1, 1, 1, 1): 1 - 6*4/(4*15)
        assert spearman([1, 2, 3, 4], [2, 1, 4, 3]).statistic == pytest.approx(0.6, abs=1e-12)

    # integer support keeps exp strictly increasing after rounding
    @given(st.lists(st.integers(-50, 50), min_size=3, max_size=25, unique=True), st.integers(0, 2**32 - 1))
    def test_invariant_under_increasing_transform(self, x, seed):
        y = np.random.default_rng(seed).normal(size=len(x))
        a = spearman(x, y)
        b = spearman(np.exp(np.asarray(x, dtype=float) / 10.0), y**3)
        assert a.statistic == pytest.approx(b.statistic, abs=1e-12)
        assert spearman(x, x).statistic == pytest.approx(1.0, abs=1e-12)

    def test_matches_scipy(self):
        rng = np.random.default_rng(2)
        x = np.round(rng.normal(size=40), 1)
        y = x + rng.normal(size=40)
        ref = sps.spearmanr(x, y)
        got = spearman(x, y)
        assert got.statistic == pytest.approx(ref.statistic, rel=1e-12)
        assert got.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    def test_constant_input_degenerate(self):
        r = spearman([1, 1, 1], [1, 2, 3])
        assert r.degenerate and r.statistic is None

    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=30))
    def test_bounded_and_symmetric(self, pairs):
        x, y = zip(*pairs)
        a, b = spearman(x, y), spearman(y, x)
        if a.degenerate:
            return
        assert -1.0 <= a.statistic <= 1.0
        assert a.statistic == pytest.approx(b.statistic, abs=1e-12)


class TestBonferroni:
    def test_scales_and_caps(self):
        assert bonferroni([0.01, 0.2, 0.5], m=4) == [0.04, 0.8, 1.0]

    def test_vector(self):
        assert bonferroni([0.001, 0.02, 0.2], m=3) == pytest.approx([0.003, 0.06, 0.6], abs=1e-15)

    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10), st.integers(0, 20))
    def test_never_decreases_never_exceeds_one(self, ps, extra):
        adj = bonferroni(ps, m=len(ps) + extra)
        assert all(p <= q <= 1.0 for p, q in zip(ps, adj))

    def test_m_defaults_to_count(self):
        assert bonferroni([0.01, 0.02]) == [0.02, 0.04]

    def test_m_too_small(self):
        with pytest.raises(InvalidInputError):
            bonferroni([0.1, 0.1], m=1)


class TestDistanceBins:
    def test_half_open_with_overflow(self):
        bins = bin_by_distance([1, 2, 3, 4, 5], [0, 9.99, 10, 25, 31])
        assert [b.label for b in bins] == ["0-10", "10-20", "20-30", ">=30"]
        assert [None if b.empty else b.summary.n for b in bins] == [2, 1, 1, 1]
        assert bins[2].summary.median == 4.0

    def test_empty_bin_marked(self):
        bins = bin_by_distance([1.0], [5.0])
        assert [b.empty for b in bins] == [False, True, True, True]
        assert bins[1].as_dict()["summary"] is None
        assert bins[3].as_dict()["hi"] is None

    def test_bad_edges(self):
        with pytest.raises(InvalidInputError):
            bin_by_distance([1.0], [1.0], edges=(0, 10, 10))

    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 80)), max_size=40))
    def test_every_value_lands_once(self, pairs):
        e = [p[0] for p in pairs]
        d = [p[1] for p in pairs]
        bins = bin_by_distance(e, d)
        assert sum(0 if b.empty else b.summary.n for b in bins) == len(pairs)
