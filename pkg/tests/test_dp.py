import math

import numpy as np
import pytest

from pricure import dp


class TestParams:
    def test_noise_scale(self):
        assert dp.PrivacyParams(epsilon=0.1, sensitivity=1.0).noise_scale == 10.0
        assert dp.PrivacyParams(epsilon=0.05, sensitivity=1.0).noise_scale == 20.0

    def test_validation(self):
        with pytest.raises(dp.DpError):
            dp.PrivacyParams(epsilon=0.0)
        with pytest.raises(dp.DpError):
            dp.PrivacyParams(mode="bogus")
        with pytest.raises(dp.DpError):
            dp.PrivacyParams(mode=dp.MODE_SCORE)  # clip required

    def test_none_mode_skips_epsilon_check(self):
        dp.PrivacyParams(epsilon=0.0, mode=dp.MODE_NONE)


class TestLaplace:
    def test_mean_and_scale(self, rng):
        draws = dp.sample_laplace(3.0, rng, size=200_000)
        assert abs(draws.mean()) < 0.05
        assert draws.std() == pytest.approx(3.0 * math.sqrt(2), rel=0.02)

    def test_bad_scale(self, rng):
        with pytest.raises(dp.DpError):
            dp.sample_laplace(0.0, rng)

    def test_flip_probability_closed_form(self):
        # precomputed by hand for b = 10
        assert dp.argmax_flip_probability(1, 10) == pytest.approx(0.4750, abs=1e-4)
        assert dp.argmax_flip_probability(5, 10) == pytest.approx(0.3791, abs=1e-4)
        assert dp.argmax_flip_probability(10, 10) == pytest.approx(0.2759, abs=1e-4)
        assert dp.argmax_flip_probability(0, 10) == pytest.approx(0.5)

    def test_flip_probability_negative_gap(self):
        assert dp.argmax_flip_probability(-5, 10) == pytest.approx(
            1.0 - dp.argmax_flip_probability(5, 10))


class TestAggregate:
    def test_vote_counts(self, rng):
        scores = [np.array([0.1, 0.9]), np.array([0.2, 0.8]), np.array([0.7, 0.3])]
        out = dp.aggregate(scores, dp.PrivacyParams(mode=dp.MODE_NONE), rng)
        assert out.values.tolist() == [1.0, 2.0]
        assert out.label == 1

    def test_score_sum_clips(self, rng):
        scores = [np.array([5.0, -3.0]), np.array([0.5, 0.5])]
        params = dp.PrivacyParams(mode=dp.MODE_NONE)
        # none mode does not clip; score mode clips into [0, clip]
        noisy = dp.aggregate(scores, dp.PrivacyParams(epsilon=1e9, mode=dp.MODE_SCORE,
                                                      clip=1.0), rng)
        assert noisy.values[0] == pytest.approx(1.5, abs=1e-4)
        assert noisy.values[1] == pytest.approx(0.5, abs=1e-4)
        plain = dp.aggregate(scores, params, rng)
        assert plain.values.tolist() == [5.5, -2.5]

    def test_majority_vote_three_owners(self, rng):
        # owners voting for classes 2, 2, 7 with negligible noise
        scores = [np.eye(8)[c] for c in (2, 2, 7)]
        out = dp.aggregate(scores, dp.PrivacyParams(epsilon=1e9), rng)
        assert out.label == 2

    def test_noise_draws_independent_across_classes(self):
        rng = np.random.default_rng(13)
        draws = dp.sample_laplace(1.0, rng, size=(1_000_000, 2))
        rho = np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]
        assert abs(rho) < 0.01

    def test_tie_breaks_low_index(self, rng):
        out = dp.aggregate([np.array([1.0, 1.0])], dp.PrivacyParams(mode=dp.MODE_NONE), rng)
        assert out.label == 0

    def test_shape_checks(self, rng):
        with pytest.raises(dp.DpError):
            dp.aggregate([], dp.PrivacyParams(), rng)
        with pytest.raises(dp.DpError):
            dp.aggregate([np.zeros(2), np.zeros(3)], dp.PrivacyParams(), rng)

    def test_vote_upset_rate_matches_theory(self):
        # 30 vs 20 votes, epsilon 0.05, sensitivity 1: scale b = 20, and the
        # winner survives with probability 1 - P(L2 - L1 > 10) = 0.6209
        rng = np.random.default_rng(77)
        params = dp.PrivacyParams(epsilon=0.05)
        scores = [np.array([1.0, 0.0])] * 30 + [np.array([0.0, 1.0])] * 20
        wins = sum(dp.aggregate(scores, params, rng).label == 0 for _ in range(20_000))
        expected = 1.0 - dp.argmax_flip_probability(10, 20)
        assert expected == pytest.approx(0.6209, abs=1e-4)
        assert wins / 20_000 == pytest.approx(expected, abs=0.01)


class TestLedger:
    def test_linear_composition(self):
        ledger = dp.BudgetLedger(cap=1.0)
        params = dp.PrivacyParams(epsilon=0.3)
        for _ in range(3):
            ledger.charge("c", params)
        assert ledger.spent_for("c") == pytest.approx(0.9)
        ledger.charge("c", dp.PrivacyParams(epsilon=0.1))
        with pytest.raises(dp.BudgetExhaustedError):
            ledger.charge("c", dp.PrivacyParams(epsilon=0.01))

    def test_clients_independent(self):
        ledger = dp.BudgetLedger(cap=0.5)
        ledger.charge("a", dp.PrivacyParams(epsilon=0.5))
        ledger.charge("b", dp.PrivacyParams(epsilon=0.5))

    def test_none_mode_charges_everything(self):
        ledger = dp.BudgetLedger(cap=100.0)
        with pytest.raises(dp.BudgetExhaustedError):
            ledger.charge("c", dp.PrivacyParams(epsilon=1.0, mode=dp.MODE_NONE))

    def test_uncapped(self):
        ledger = dp.BudgetLedger(cap=None)
        for _ in range(100):
            ledger.charge("c", dp.PrivacyParams(epsilon=10.0))
