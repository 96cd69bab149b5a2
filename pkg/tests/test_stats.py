"""Bootstrap, paired difference, and deviation-score tests."""

import numpy as np
import pytest

from routecast.stats import (
    DegenerateInput,
    EmptyOutcomes,
    LengthMismatch,
    bootstrap_ci,
    deviation_scores,
    paired_diff,
)

from helpers import oracle_bootstrap


class TestBootstrapCI:
    def test_zero_variance_sample(self):
        ci = bootstrap_ci([1.0] * 50, seed=1)
        assert (ci.mean, ci.lo, ci.hi) == (1.0, 1.0, 1.0)
        # 50 positives but zero negatives: below the 5-outcome floor
        assert ci.reliable is False

    def test_sixty_forty_against_independent_oracle(self):
        outcomes = [1.0] * 60 + [0.0] * 40
        ci = bootstrap_ci(outcomes, 10_000, seed=2024)
        mean, lo, hi = oracle_bootstrap(outcomes, 10_000, seed=2024)
        assert ci.mean == pytest.approx(0.600, abs=1e-12)
        assert ci.lo == pytest.approx(lo, abs=0.02)
        assert ci.hi == pytest.approx(hi, abs=0.02)
        # sanity window for a 0.6 proportion at n=100
        assert 0.47 <= ci.lo <= 0.55
        assert 0.65 <= ci.hi <= 0.73
        assert ci.reliable is True

    def test_small_n_flagged_unreliable(self):
        ci = bootstrap_ci([1.0, 0.0] * 5, seed=3)
        assert ci.n == 10
        assert ci.reliable is False

    def test_few_negatives_flagged_unreliable(self):
        ci = bootstrap_ci([1.0] * 46 + [0.0] * 4, seed=4)
        assert ci.reliable is False

    def test_five_negatives_is_reliable(self):
        ci = bootstrap_ci([1.0] * 45 + [0.0] * 5, seed=4)
        assert ci.reliable is True

    def test_non_binary_uses_only_n_rule(self):
        ci = bootstrap_ci([0.5] * 31, seed=5)
        assert ci.reliable is True

    def test_deterministic_bit_identical(self):
        outcomes = [1.0] * 7 + [0.0] * 25
        a = bootstrap_ci(outcomes, 500, seed=77)
        b = bootstrap_ci(outcomes, 500, seed=77)
        assert a == b

    def test_seed_changes_resampling(self):
        # continuous outcomes so percentile interpolation exposes the seed
        outcomes = [float(i) / 37.0 for i in range(40)]
        a = bootstrap_ci(outcomes, 500, seed=1)
        b = bootstrap_ci(outcomes, 500, seed=2)
        assert (a.lo, a.hi) != (b.lo, b.hi)

    def test_empty_outcomes(self):
        with pytest.raises(EmptyOutcomes):
            bootstrap_ci([], seed=1)

    def test_interval_brackets_mean(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            outcomes = rng.binomial(1, rng.uniform(0.2, 0.8), size=60).astype(float)
            ci = bootstrap_ci(outcomes.tolist(), 1000, seed=int(rng.integers(2**32)))
            assert ci.lo <= ci.mean <= ci.hi

    def test_width_shrinks_with_n(self):
        """Interval width behaves like 1/sqrt(n) on matched Bernoulli data."""
        small = bootstrap_ci([1.0] * 60 + [0.0] * 40, 4000, seed=5)
        big = bootstrap_ci(([1.0] * 60 + [0.0] * 40) * 4, 4000, seed=5)
        assert (big.hi - big.lo) < (small.hi - small.lo)


class TestPairedDiff:
    def test_identical_outcomes_never_significant(self):
        outcomes = [1.0, 0.0, 1.0, 1.0, 0.0] * 8
        for seed in range(25):
            result = paired_diff(outcomes, outcomes, 400, seed=seed)
            assert result.mean_diff == 0.0
            assert (result.lo, result.hi) == (0.0, 0.0)
            assert result.significant is False

    def test_b_wins_everywhere(self):
        result = paired_diff([0.0] * 100, [1.0] * 100, 1000, seed=6)
        assert result.mean_diff == 1.0
        assert result.significant is True
        assert result.lo > 0

    def test_mixed_wins_match_oracle_significance(self):
        a = [1.0] * 45 + [0.0] * 55
        b = [0.0] * 45 + [1.0] * 55
        result = paired_diff(a, b, 10_000, seed=123)
        diffs = [bb - aa for aa, bb in zip(a, b)]
        _, lo, hi = oracle_bootstrap(diffs, 10_000, seed=123)
        assert result.lo == pytest.approx(lo, abs=0.02)
        assert result.hi == pytest.approx(hi, abs=0.02)
        assert result.significant == (lo > 0 or hi < 0)

    def test_significance_iff_zero_outside_interval(self):
        rng = np.random.default_rng(31)
        for trial in range(15):
            a = rng.binomial(1, 0.5, size=40).astype(float).tolist()
            b = rng.binomial(1, 0.6, size=40).astype(float).tolist()
            result = paired_diff(a, b, 800, seed=trial)
            assert result.significant == (result.lo > 0 or result.hi < 0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            paired_diff([1.0], [1.0, 0.0], seed=1)
        with pytest.raises(LengthMismatch):
            paired_diff([], [], seed=1)

    def test_bit_stable_under_fixed_seed(self):
        a = [1.0, 0.0] * 30
        b = [0.0, 1.0] * 30
        assert paired_diff(a, b, 700, seed=9) == paired_diff(a, b, 700, seed=9)


class TestDeviationScores:
    def test_row_at_column_means_scores_zero(self):
        matrix = [
            [0.5, 0.2, 0.9],
            [0.7, 0.4, 0.5],
            [0.6, 0.3, 0.7],  # exactly the column means
        ]
        scores, argmin = deviation_scores(matrix)
        assert scores[2] == pytest.approx(0.0, abs=1e-12)
        assert argmin == 2

    def test_two_population_sd_above_mean_scores_four(self):
        # column 0: values 1 and 3 -> mean 2, population sd 1; row 1 sits +1 sd...
        # use a 2-row column with spread 2: z = +/-1; to get z=2 use explicit column
        matrix = [
            [0.0, 5.0],
            [0.0, 5.0],
            [0.0, 5.0],
            [0.0, 5.0],
            [2.0, 5.0],  # column mean 0.4, sd 0.8 -> z = 2.0
        ]
        scores, _ = deviation_scores(matrix)
        assert scores[4] == pytest.approx(4.0, abs=1e-12)

    def test_zero_variance_columns_contribute_nothing(self):
        scores, argmin = deviation_scores([[1.0, 1.0, 1.0]] * 4)
        assert scores == [0.0, 0.0, 0.0, 0.0]
        assert argmin == 0  # ties resolve to the lowest index

    def test_random_matrix_matches_recomputation(self):
        rng = np.random.default_rng(15)
        matrix = rng.uniform(size=(15, 3))
        scores, argmin = deviation_scores(matrix.tolist())
        mu = matrix.mean(axis=0)
        sd = matrix.std(axis=0)
        expected = (((matrix - mu) / sd) ** 2).sum(axis=1)
        assert np.allclose(scores, expected)
        assert argmin == int(np.argmin(expected))

    def test_degenerate_input(self):
        with pytest.raises(DegenerateInput):
            deviation_scores([[1.0, 2.0, 3.0]])
