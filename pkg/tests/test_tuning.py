"""Random search and expanding-window cross-validation contracts."""
import datetime as dt

import numpy as np
import pytest

from arbocast.errors import DataFormatError
from arbocast.metrics import MetricsReport
from arbocast.nn import ARCH_BIDIRECTIONAL, ARCH_SIMPLE, default_config
from arbocast.preprocess import (
    SPLIT_NONE,
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VAL,
    ScalerParams,
    WindowedDataset,
)
from arbocast.training import TrainConfig
from arbocast.tuning import (
    SearchSpace,
    cv_fold_bounds,
    random_search,
    sample_trials,
    ts_cross_validate,
    write_trial_log,
)


def _dataset(n=60, window=5, seed=0, test_tail=10):
    rng = np.random.default_rng(seed)
    x = rng.random((n, window))
    y_reg = x.mean(axis=1)
    y_clf = (y_reg > 0.5).astype(np.int8)
    dates = np.array(
        [dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(n)], dtype=object
    )
    split = np.array(
        [SPLIT_TRAIN] * (n - test_tail - 8) + [SPLIT_VAL] * 8 + [SPLIT_TEST] * test_tail,
        dtype="<U5",
    )
    return WindowedDataset(window, x, y_reg, y_clf, dates, split)


class TestRandomSearch:
    def test_same_seed_same_trials(self):
        space = SearchSpace(n_trials=10)
        a = sample_trials(space, 2, seed=5)
        b = sample_trials(space, 2, seed=5)
        assert a == b
        c = sample_trials(space, 2, seed=6)
        assert a != c

    def test_bounds_respected_all_trials(self):
        space = SearchSpace()
        for n_layers in (2, 3):
            trials = sample_trials(space, n_layers, seed=123)
            assert len(trials) == 30
            for trial in trials:
                assert len(trial.units) == n_layers
                assert all(128 <= u <= 512 for u in trial.units)

    def test_stub_trainer_argmin(self):
        """Injected val_loss = |units_l1 - 300| -> winner is nearest 300."""
        ds = _dataset()
        space = SearchSpace(n_trials=30)
        best, results = random_search(
            space, ds, seed=11, architecture=ARCH_SIMPLE,
            trainer=lambda trial: abs(trial.units[0] - 300),
        )
        expected = min(results, key=lambda r: (abs(r.config.units[0] - 300), r.trial))
        assert best == expected.config
        assert len(results) == 30

    def test_tie_breaks_to_earliest_trial(self):
        ds = _dataset()
        space = SearchSpace(n_trials=6)
        best, results = random_search(
            space, ds, seed=2, architecture=ARCH_SIMPLE, trainer=lambda trial: 1.0
        )
        assert best == results[0].config

    def test_real_trainer_smoke(self):
        """Two tiny real trials complete and produce finite losses."""
        ds = _dataset()
        space = SearchSpace(units_min=4, units_max=8, n_trials=2, trial_epochs=2)
        best, results = random_search(
            space, ds, seed=3, architecture=ARCH_SIMPLE, dropout_rate=0.0
        )
        assert len(results) == 2
        assert all(np.isfinite(r.val_loss) for r in results)
        assert best in [r.config for r in results]

    def test_parallel_jobs_match_sequential(self):
        """jobs > 1 gathers results in trial order with identical losses."""
        ds = _dataset()
        space = SearchSpace(units_min=4, units_max=6, n_trials=2, trial_epochs=1)
        kwargs = dict(seed=9, architecture=ARCH_SIMPLE, dropout_rate=0.0)
        best_seq, seq = random_search(space, ds, jobs=1, **kwargs)
        best_par, par = random_search(space, ds, jobs=2, **kwargs)
        assert seq == par
        assert best_seq == best_par

    def test_trial_log_csv(self, tmp_path):
        ds = _dataset()
        space = SearchSpace(n_trials=4)
        _, results = random_search(
            space, ds, seed=1, architecture=ARCH_BIDIRECTIONAL, trainer=lambda t: 0.5
        )
        path = tmp_path / "trials.csv"
        write_trial_log(path, results, config_hash="beef")
        lines = path.read_text().splitlines()
        assert lines[0] == "# config_hash=beef"
        assert lines[1] == "trial,units_l1,units_l2,units_l3,val_loss,seed"
        assert len(lines) == 2 + 4


class TestCvFoldBounds:
    def test_partition_arithmetic_600(self):
        """600 samples, k=5: train on 100..500, validate on the next 100."""
        bounds = cv_fold_bounds(600, 5)
        assert bounds == [(100, 200), (200, 300), (300, 400), (400, 500), (500, 600)]

    def test_remainder_goes_to_first_block(self):
        bounds = cv_fold_bounds(604, 5)
        assert bounds[0] == (104, 204)
        assert bounds[-1] == (504, 604)

    def test_validation_blocks_disjoint_and_cover(self):
        """Union of validation ranges = samples block..n-1, disjoint."""
        bounds = cv_fold_bounds(600, 5)
        seen = []
        for train_end, val_end in bounds:
            seen.extend(range(train_end, val_end))
        assert seen == list(range(100, 600))
        assert len(seen) == len(set(seen))

    def test_too_few_samples(self):
        with pytest.raises(DataFormatError, match="at least 6"):
            cv_fold_bounds(5, 5)


class TestTsCrossValidate:
    def test_fold_chronology_and_reports(self):
        ds = _dataset(n=80, test_tail=10)
        cfg = TrainConfig(epochs=2, batch_size=16, patience_stop=None, plateau_patience=None, seed=0)
        model_cfg = default_config(ARCH_SIMPLE, 5, lstm_units=(4, 4), dropout_rate=0.0)
        scaler = ScalerParams(0.0, 1.0)
        reports = ts_cross_validate(ds, 3, cfg, model_cfg, scaler, seed=0)
        assert len(reports) == 3
        assert all(isinstance(r, MetricsReport) for r in reports)
        pre = ds.subset(ds.split != SPLIT_TEST)
        for i, (train_end, val_end) in enumerate(cv_fold_bounds(pre.n, 3)):
            train_dates = pre.target_dates[:train_end]
            val_dates = pre.target_dates[train_end:val_end]
            assert max(train_dates) < min(val_dates)

    def test_excludes_test_samples(self):
        ds = _dataset(n=80, test_tail=20)
        cfg = TrainConfig(epochs=1, batch_size=16, patience_stop=None, plateau_patience=None, seed=0)
        model_cfg = default_config(ARCH_SIMPLE, 5, lstm_units=(4, 4), dropout_rate=0.0)
        reports = ts_cross_validate(ds, 3, cfg, model_cfg, ScalerParams(0.0, 1.0), seed=0)
        pre_n = (ds.split != SPLIT_TEST).sum()
        block = pre_n // 4
        assert all(r.n_samples == block for r in reports)
