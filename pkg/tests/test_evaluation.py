import math

import numpy as np
import pandas as pd
import pytest

from src.core.errors import BudgetMismatchError, ShapeError
from src.models.schemas import SamplerConfig, Trajectory
from src.services.evaluation import (
    HALF_NORMAL_MEAN,
    ArmResult,
    MetricTable,
    bridge_comparison,
    mean_abs_zscore,
    mean_finite_psnr,
    mismatch_diagnostic,
    mse_psnr,
    sanity_within,
    t0_score,
    training_marginal,
)
from src.services.toyworld import stack_pairs
from tests.conftest import make_tiny_pairs


class TestMetrics:
    def test_exact_match_is_infinite_psnr(self):
        x = np.full(4, 0.3)
        assert mse_psnr(x, x) == (0.0, math.inf)

    def test_known_value(self):
        mse, psnr = mse_psnr(np.full(4, 0.5), np.full(4, 0.4))
        assert mse == pytest.approx(0.01)
        assert psnr == pytest.approx(20.0)

    def test_reference_range_and_shape(self):
        with pytest.raises(ValueError):
            mse_psnr(np.zeros(2), np.array([0.0, 1.5]))
        with pytest.raises(ShapeError):
            mse_psnr(np.zeros(2), np.zeros(3))

    def test_mean_skips_infinite(self):
        assert mean_finite_psnr([20.0, math.inf, 30.0]) == pytest.approx(25.0)
        assert mean_finite_psnr([math.inf]) == math.inf


class TestT0Score:
    def test_hand_computed_table(self):
        frame = pd.DataFrame({"psnr": [20.0, 22.0, 21.0], "mse": [0.04, 0.01, 0.02]}, index=[0.2, 0.4, 0.6])
        score = t0_score(MetricTable(frame, {"psnr": True, "mse": False}))
        assert score.name == "score"
        np.testing.assert_allclose(score.to_numpy(), [0.0, 1.0, 7.0 / 12.0], atol=1e-12)
        assert score.idxmax() == 0.4

    def test_constant_column_contributes_half(self):
        frame = pd.DataFrame({"psnr": [20.0, 22.0, 21.0], "lpips": [0.3, 0.3, 0.3]})
        score = t0_score(MetricTable(frame, {"psnr": True, "lpips": False}))
        np.testing.assert_allclose(score.to_numpy(), [0.25, 0.75, 0.5])

    def test_single_candidate_rejected(self):
        with pytest.raises(ValueError):
            MetricTable(pd.DataFrame({"psnr": [20.0]}), {"psnr": True})

    def test_orientation_required(self):
        with pytest.raises(ValueError, match="mse"):
            MetricTable(pd.DataFrame({"mse": [0.1, 0.2]}), {})

    def test_missing_values_rejected(self):
        with pytest.raises(ValueError):
            MetricTable(pd.DataFrame({"psnr": [20.0, np.nan]}), {"psnr": True})


def _arms(mse_by_arm, seeds=(0, 1, 2), iterations=100):
    return [
        ArmResult(Trajectory(arm), seed, iterations, 2, 5e-4, mse, 10.0 * math.log10(1.0 / mse))
        for arm, mse in mse_by_arm.items()
        for seed in seeds
    ]


class TestBridgeComparison:
    def test_verdicts_and_summary(self):
        report = bridge_comparison(_arms({"naive": 0.04, "ddbm": 0.02, "ebr": 0.01}))
        assert list(report.summary["trajectory"]) == ["naive", "ddbm", "ebr"]
        assert len(report.per_seed) == 9
        assert report.verdicts[0].startswith("seed 0: MSE(ebr) < MSE(naive) held")
        assert len(report.verdicts) == 4
        assert report.ebr_beats_naive and report.ebr_not_worse_than_ddbm

    def test_failed_verdict_is_reported(self):
        report = bridge_comparison(_arms({"naive": 0.01, "ddbm": 0.02, "ebr": 0.03}))
        assert not report.ebr_beats_naive
        assert "FAILED" in report.verdicts[-1]

    def test_budget_mismatch(self):
        results = _arms({"naive": 0.04, "ddbm": 0.02}) + _arms({"ebr": 0.01}, iterations=200)
        with pytest.raises(BudgetMismatchError):
            bridge_comparison(results)

    def test_seed_sets_must_agree(self):
        results = _arms({"naive": 0.04, "ddbm": 0.02}) + _arms({"ebr": 0.01}, seeds=(0, 1))
        with pytest.raises(BudgetMismatchError):
            bridge_comparison(results)

    def test_all_arms_required(self):
        with pytest.raises(ValueError):
            bridge_comparison(_arms({"naive": 0.04, "ebr": 0.01}))


class TestMismatch:
    def test_needs_thirty_pairs(self):
        with pytest.raises(ValueError, match="30"):
            training_marginal(Trajectory.EBR, make_tiny_pairs(29), 0.2)

    def test_fresh_noise_scores_half_normal_mean(self):
        pairs = make_tiny_pairs(2000)
        mean, std = training_marginal(Trajectory.NAIVE, pairs, 1.0, seed=0)
        fresh = np.random.default_rng(99).standard_normal((2000, 8))
        assert mean_abs_zscore(fresh, mean, std) == pytest.approx(HALF_NORMAL_MEAN, abs=0.03)

    def test_curve_has_one_row_per_step(self, tiny_backbone, tiny_pathway):
        pairs = make_tiny_pairs(30)
        _, degraded = stack_pairs(pairs[:5])
        curve = mismatch_diagnostic(
            Trajectory.EBR,
            tiny_pathway.null_context(),
            tiny_backbone,
            SamplerConfig(steps=4),
            pairs,
            degraded,
        )
        assert list(curve.columns) == ["step", "t", "divergence"]
        assert list(curve["step"]) == [0, 1, 2, 3]
        np.testing.assert_allclose(curve["t"], [0.4, 0.3, 0.2, 0.1])
        assert (curve["divergence"] >= 0).all()

    def test_naive_curve_starts_at_one(self, tiny_backbone, tiny_pathway):
        pairs = make_tiny_pairs(30)
        _, degraded = stack_pairs(pairs[:5])
        curve = mismatch_diagnostic(
            Trajectory.NAIVE,
            tiny_pathway.null_context(),
            tiny_backbone,
            SamplerConfig(trajectory="naive", steps=4),
            pairs,
            degraded,
        )
        np.testing.assert_allclose(curve["t"], [1.0, 0.75, 0.5, 0.25])

    def test_sanity_tolerance_is_tight(self):
        assert sanity_within(HALF_NORMAL_MEAN + 0.04)
        assert sanity_within(HALF_NORMAL_MEAN - 0.045)
        assert not sanity_within(0.70)
        assert not sanity_within(0.90)
        assert sanity_within(0.70, tolerance=0.15)

    def test_diagnostic_needs_thirty_pairs(self, tiny_backbone, tiny_pathway):
        pairs = make_tiny_pairs(10)
        with pytest.raises(ValueError):
            mismatch_diagnostic(
                Trajectory.EBR,
                tiny_pathway.null_context(),
                tiny_backbone,
                SamplerConfig(steps=2),
                pairs,
                stack_pairs(pairs)[1],
            )
