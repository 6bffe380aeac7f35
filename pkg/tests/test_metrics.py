"""Metric implementations against brute-force oracles."""
import numpy as np
import pytest

from arbocast.errors import DataFormatError, NumericError
from arbocast.metrics import (
    MetricsReport,
    auc_roc,
    bootstrap_ci,
    classify,
    compute_report,
    f1_score,
    mape,
    medape,
    percentage_errors,
)


from oracles import brute_force_auc, brute_force_f1


class TestF1:
    def test_perfect(self):
        assert f1_score([1, 0, 1], [1, 0, 1]) == 1.0

    def test_half(self):
        # TP=1, FP=1, FN=1 -> precision = recall = 0.5
        assert f1_score([1, 1, 0], [1, 0, 1]) == 0.5

    def test_no_predicted_positives(self):
        assert f1_score([0, 0, 0], [1, 0, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            f1_score([1, 0], [1])

    def test_matches_confusion_matrix_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = rng.integers(2, 51)
            pred = rng.integers(0, 2, size=n)
            actual = rng.integers(0, 2, size=n)
            assert f1_score(pred, actual) == brute_force_f1(pred, actual)


class TestAucRoc:
    def test_perfect_ranking(self):
        assert auc_roc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_all_ties(self):
        assert auc_roc([0.4, 0.4, 0.4, 0.4], [1, 0, 1, 0]) == 0.5

    def test_pair_counting_example(self):
        got = auc_roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert got == pytest.approx(0.75)
        assert got == pytest.approx(brute_force_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]))

    def test_single_class_rejected(self):
        with pytest.raises(DataFormatError):
            auc_roc([0.1, 0.9], [1, 1])

    def test_matches_pair_oracle_exactly(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(2, 51))
            actual = rng.integers(0, 2, size=n)
            if actual.min() == actual.max():
                actual[0] = 1 - actual[0]
            # quantized scores force plenty of ties
            scores = np.round(rng.random(n), 1)
            assert auc_roc(scores, actual) == pytest.approx(
                brute_force_auc(scores, actual), abs=1e-12
            )

    def test_monotone_rescaling_invariance(self):
        rng = np.random.default_rng(9)
        scores = rng.random(40)
        actual = rng.integers(0, 2, size=40)
        actual[0], actual[1] = 0, 1
        base = auc_roc(scores, actual)
        assert auc_roc(3.0 * scores + 2.0, actual) == pytest.approx(base)
        assert auc_roc(np.exp(scores), actual) == pytest.approx(base)


class TestPercentageErrors:
    def test_mape_basic(self):
        assert mape([110.0], [100.0]) == pytest.approx(10.0)

    def test_mape_exact(self):
        assert mape([5.0, 7.0], [5.0, 7.0]) == 0.0

    def test_mape_mean_of_errors(self):
        # errors 5%, 10%, 80%
        pred = [105.0, 110.0, 180.0]
        actual = [100.0, 100.0, 100.0]
        assert mape(pred, actual) == pytest.approx((5 + 10 + 80) / 3)
        assert medape(pred, actual) == pytest.approx(10.0)

    def test_medape_even_count(self):
        assert medape([110.0, 120.0], [100.0, 100.0]) == pytest.approx(15.0)

    def test_zero_actuals_excluded_and_counted(self):
        errs, excluded = percentage_errors([10.0, 5.0], [0.0, 10.0])
        assert excluded == 1
        np.testing.assert_allclose(errs, [50.0])

    def test_all_zero_actuals_rejected(self):
        with pytest.raises(DataFormatError):
            mape([1.0, 2.0], [0.0, 0.0])

    def test_medape_robust_to_right_skew(self):
        """Median <= mean of a right-skewed error distribution (order-statistics oracle)."""
        rng = np.random.default_rng(17)
        actual = rng.uniform(50, 150, size=1000)
        pred = actual * (1.0 + rng.lognormal(mean=-2.0, sigma=1.0, size=1000))
        assert medape(pred, actual) <= mape(pred, actual)


class TestClassify:
    def test_threshold_strict(self):
        np.testing.assert_array_equal(classify([0.4, 0.5, 0.51]), [0, 0, 1])


class TestBootstrapCi:
    def test_constant_metric(self):
        lo, hi = bootstrap_ci(lambda a: 3.25, [np.arange(20)], n_iter=100, seed=0)
        assert (lo, hi) == (3.25, 3.25)

    def test_seed_determinism(self):
        data = np.random.default_rng(2).normal(size=50)
        one = bootstrap_ci(lambda a: float(a.mean()), [data], n_iter=200, seed=42)
        two = bootstrap_ci(lambda a: float(a.mean()), [data], n_iter=200, seed=42)
        assert one == two

    def test_interval_within_metric_range(self):
        rng = np.random.default_rng(3)
        scores = rng.random(60)
        actual = rng.integers(0, 2, size=60)
        actual[:2] = [0, 1]
        lo, hi = bootstrap_ci(
            auc_roc, (scores, actual), n_iter=300, seed=1, class_array=1
        )
        assert 0.0 <= lo <= hi <= 1.0

    def test_single_class_redraw_succeeds(self):
        # one positive among 12: plain resampling often drops it
        actual = np.zeros(12, dtype=int)
        actual[0] = 1
        scores = np.linspace(0, 1, 12)
        lo, hi = bootstrap_ci(
            auc_roc, (scores, actual), n_iter=200, seed=7, class_array=1
        )
        assert 0.0 <= lo <= hi <= 1.0

    def test_redraw_bound_exceeded(self):
        actual = np.zeros(10, dtype=int)  # single class: can never succeed
        scores = np.linspace(0, 1, 10)
        with pytest.raises(NumericError, match="redraw"):
            bootstrap_ci(auc_roc, (scores, actual), n_iter=50, seed=0, class_array=1)

    def test_percentiles_use_linear_interpolation(self):
        # with an identity metric over a fixed resample distribution the
        # interval must match numpy's linear percentile rule
        data = np.arange(10.0)
        lo, hi = bootstrap_ci(lambda a: float(a.mean()), [data], n_iter=400, seed=5)
        rng = np.random.default_rng(5)
        stats = np.array(
            [data[rng.integers(0, 10, size=10)].mean() for _ in range(400)]
        )
        np.testing.assert_allclose([lo, hi], np.percentile(stats, [2.5, 97.5]))


class TestMetricsReport:
    def test_json_round_trip(self):
        report = MetricsReport(
            f1=0.8, auc_roc=0.9, mape=12.0, medape=8.0, n_samples=100,
            excluded_zero_actuals=3, ci={"f1": (0.7, 0.9, 0.95)},
        )
        back = MetricsReport.from_json_dict(
            __import__("json").loads(report.to_json())
        )
        assert back == report

    def test_ci_must_bracket_point(self):
        with pytest.raises(ValueError, match="bracket"):
            MetricsReport(
                f1=0.95, auc_roc=None, mape=1.0, medape=1.0, n_samples=5,
                ci={"f1": (0.1, 0.2, 0.95)},
            )

    def test_compute_report_end_to_end(self):
        rng = np.random.default_rng(23)
        n = 120
        actual = rng.integers(0, 2, size=n)
        actual[:2] = [0, 1]
        scores = np.clip(actual * 0.6 + rng.random(n) * 0.5, 0, 1)
        actual_vals = rng.uniform(50, 200, size=n)
        pred_vals = actual_vals * (1 + rng.normal(0, 0.05, size=n))
        report = compute_report(
            scores, actual, pred_vals, actual_vals, bootstrap=True, n_iter=200, seed=3
        )
        assert report.f1 == f1_score(classify(scores), actual)
        assert report.auc_roc == auc_roc(scores, actual)
        assert set(report.ci) == {"f1", "auc_roc"}
        for name, (lo, hi, level) in report.ci.items():
            assert lo <= getattr(report, name) <= hi
            assert level == 0.95
