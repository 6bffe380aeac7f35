"""Acceptance gate: one test per criterion, each printing a pass line.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion; a failed assertion shows up as the criterion's FAILED line.
"""
import json
import time

import numpy as np
import pytest

from oracles import brute_force_auc, brute_force_f1, finite_difference_check

from arbocast.cli import main
from arbocast.metrics import auc_roc, bootstrap_ci, f1_score, mape, medape
from arbocast.nn import (
    ARCH_BIDIRECTIONAL,
    ARCH_SIMPLE,
    default_config,
    init_params,
)
from arbocast.preprocess import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VAL,
    ScalerParams,
    fit_scaler,
    inverse_transform,
    prepare_dataset,
    transform,
)
from arbocast.tuning import SearchSpace, cv_fold_bounds, random_search, ts_cross_validate
from arbocast.training import TrainConfig, train


def _report(criterion, text):
    print(f"\nACCEPTANCE {criterion} PASS - {text}")


def test_c1_gradient_oracle():
    """Analytic BPTT vs central finite differences, both architectures."""
    start = time.time()
    worst = 0.0
    skipped = 0
    total = 0
    for arch in (ARCH_SIMPLE, ARCH_BIDIRECTIONAL):
        n_layers = 2 if arch == ARCH_SIMPLE else 3
        for seed in range(5):
            rng = np.random.default_rng(1000 + seed)
            config = default_config(arch, 5, lstm_units=(4,) * n_layers, dropout_rate=0.0)
            params = init_params(config, seed=seed)
            x = rng.random((3, 5))
            y_clf = rng.integers(0, 2, size=3).astype(float)
            y_reg = rng.normal(size=3)
            stats = {}
            err = finite_difference_check(params, x, y_clf, y_reg, step=1e-4, stats=stats)
            worst = max(worst, err)
            skipped += stats["skipped"]
            total += stats["total"]
            assert err < 1e-4, f"{arch} seed {seed}: max relative error {err:.2e}"
    elapsed = time.time() - start
    # rectifier-kink exclusions must stay negligible for the check to have power
    assert skipped <= 0.001 * total, f"{skipped}/{total} coordinates skipped"
    assert elapsed < 30.0, f"gradient oracle took {elapsed:.1f}s"
    _report(
        1,
        f"gradient oracle: 10 toy models, worst rel err {worst:.2e}, "
        f"{skipped}/{total} kink exclusions, {elapsed:.1f}s",
    )


def test_c2_metric_oracles():
    """Brute-force F1 and pairwise AUC match exactly; closed-form MAPE/MedAPE."""
    rng = np.random.default_rng(77)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        pred = rng.integers(0, 2, size=n)
        actual = rng.integers(0, 2, size=n)
        assert f1_score(pred, actual) == brute_force_f1(pred, actual)
        if actual.min() != actual.max():
            scores = np.round(rng.random(n), 1)  # ties guaranteed
            assert auc_roc(scores, actual) == brute_force_auc(scores, actual)

    assert mape([110.0], [100.0]) == pytest.approx(10.0)
    assert mape([105.0, 110.0, 180.0], [100.0] * 3) == pytest.approx((5 + 10 + 80) / 3)
    assert medape([105.0, 110.0, 180.0], [100.0] * 3) == pytest.approx(10.0)
    assert medape([110.0, 120.0], [100.0] * 2) == pytest.approx(15.0)
    _report(2, "F1/AUC exact against brute force on 100 instances; MAPE/MedAPE closed forms")


def test_c3_scaler_round_trip():
    """transform/inverse_transform identity to 1e-12 relative on 1e4 values."""
    rng = np.random.default_rng(3)
    values = rng.uniform(-1e5, 1e5, size=10_000)
    scaler = fit_scaler(rng.uniform(-50.0, 50.0, size=1000))
    back = inverse_transform(scaler, transform(scaler, values))
    np.testing.assert_allclose(back, values, rtol=1e-12)

    # degenerate min=max series: its own (constant) values round-trip exactly
    degenerate = fit_scaler(np.full(100, 7.25))
    assert degenerate.degenerate
    round_tripped = inverse_transform(degenerate, transform(degenerate, np.full(10_000, 7.25)))
    np.testing.assert_allclose(round_tripped, 7.25, rtol=1e-12)
    _report(3, "scaler round-trip within 1e-12 on 1e4 values incl. degenerate series")


def test_c4_leakage_suite():
    """Split chronology, CV chronology, and scaler fitting on randomized data."""
    import datetime as dt

    from arbocast.data import CaseSeries, Disease, IncidenceSeries, label_outbreaks

    rng = np.random.default_rng(44)
    for trial in range(10):
        n_days = int(rng.integers(420, 900))
        start = dt.date(2019, 1, 1)
        dates = tuple(start + dt.timedelta(days=i) for i in range(n_days))
        counts = tuple(int(c) for c in rng.integers(0, 500, size=n_days))
        series = CaseSeries(Disease.DENGUE, "rand", dates, counts)
        months = sorted({d.replace(day=1) for d in dates})
        inc = IncidenceSeries(Disease.DENGUE, tuple(months), tuple(0.0 for _ in months))
        labels = label_outbreaks(inc, 0.0, 0.75)
        test_year = dates[-1].year
        window = int(rng.integers(10, 70))
        vf = float(rng.uniform(0.1, 0.4))

        ds, scaler = prepare_dataset(series, labels, window, test_year, vf)
        train_dates = ds.target_dates[ds.split == SPLIT_TRAIN]
        val_dates = ds.target_dates[ds.split == SPLIT_VAL]
        test_dates = ds.target_dates[ds.split == SPLIT_TEST]
        assert max(train_dates) < min(val_dates)
        assert all(d.year == test_year for d in test_dates)
        assert all(d.year != test_year for d in np.concatenate([train_dates, val_dates]))

        raw = np.asarray(counts, dtype=float)
        train_targets = raw[window:][ds.split == SPLIT_TRAIN]
        assert scaler.x_min == train_targets.min()
        assert scaler.x_max == train_targets.max()

        pre_n = int((ds.split != SPLIT_TEST).sum())
        for train_end, val_end in cv_fold_bounds(pre_n, 5):
            pre_dates = ds.target_dates[ds.split != SPLIT_TEST]
            assert max(pre_dates[:train_end]) < min(pre_dates[train_end:val_end])

    # one real (tiny) cross-validation run obeys the same chronology
    ds, scaler = prepare_dataset(series, labels, 10, test_year, 0.2)
    cfg = TrainConfig(epochs=1, batch_size=64, patience_stop=None, plateau_patience=None, seed=0)
    model_cfg = default_config(ARCH_SIMPLE, 10, lstm_units=(4, 4), dropout_rate=0.0)
    reports = ts_cross_validate(ds, 5, cfg, model_cfg, scaler, seed=0)
    assert len(reports) == 5
    _report(4, "no-leakage invariants hold on 10 randomized datasets + real 5-fold CV")


def test_c5_bootstrap_coverage():
    """95% interval covers Bernoulli(0.7) accuracy in 92-98% of datasets."""
    start = time.time()
    rng = np.random.default_rng(0)
    covered = 0
    n_datasets = 500
    for k in range(n_datasets):
        data = (rng.random(200) < 0.7).astype(float)
        lo, hi = bootstrap_ci(lambda a: float(a.mean()), [data], n_iter=1000, seed=k)
        if lo <= 0.7 <= hi:
            covered += 1
    rate = covered / n_datasets
    elapsed = time.time() - start
    assert 0.92 <= rate <= 0.98, f"coverage {rate:.3f} outside [0.92, 0.98]"
    assert elapsed < 120.0, f"coverage simulation took {elapsed:.1f}s"
    _report(5, f"bootstrap coverage {rate:.3f} over 500 datasets in {elapsed:.0f}s")


def test_c6_overfit_sanity():
    """8-sample toy set reaches joint loss < 1e-2 within 500 epochs, dropout 0."""
    import datetime as dt

    from arbocast.preprocess import WindowedDataset

    rng = np.random.default_rng(0)
    x = rng.random((12, 5))
    y_reg = x.mean(axis=1)
    y_clf = (y_reg > 0.5).astype(np.int8)
    dates = np.array(
        [dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(12)], dtype=object
    )
    split = np.array([SPLIT_TRAIN] * 8 + [SPLIT_VAL] * 4, dtype="<U5")
    ds = WindowedDataset(5, x, y_reg, y_clf, dates, split)

    config = default_config(ARCH_SIMPLE, 5, lstm_units=(8, 8), dropout_rate=0.0)
    params = init_params(config, seed=1)
    cfg = TrainConfig(
        epochs=500, batch_size=8, patience_stop=None, plateau_patience=None,
        lr_init=1e-2, seed=1,
    )
    _, history = train(params, ds, cfg)
    best = min(history.train_loss)
    reached = next(i + 1 for i, v in enumerate(history.train_loss) if v < 1e-2)
    assert best < 1e-2
    _report(6, f"overfit sanity: loss < 1e-2 at epoch {reached} (min {best:.2e})")


ACCEPTANCE_SEED = "0"


@pytest.fixture(scope="module")
def e2e_runs(tmp_path_factory):
    """Run the default synthetic pipeline twice with the same seed."""
    results = []
    for tag in ("first", "second"):
        out = tmp_path_factory.mktemp(f"e2e_{tag}")
        started = time.time()
        for cmd in ("synth", "ingest", "label", "train", "evaluate", "forecast"):
            code = main([cmd, "--seed", ACCEPTANCE_SEED, "--out", str(out)])
            assert code == 0, f"{cmd} exited {code}"
        elapsed = time.time() - started
        payload = json.loads((out / "metrics.json").read_text())
        results.append({"out": out, "elapsed": elapsed, "metrics": payload})
    return results


def test_c7_synthetic_end_to_end(e2e_runs):
    """Default spec, simple T=60: test F1 >= 0.8 and teacher-forced MAPE <= 15%."""
    run = e2e_runs[0]
    for name in (
        "cases.csv", "population.csv", "ingest_report.json", "labels.csv",
        "model.npz", "metrics.json", "forecast.csv",
    ):
        assert (run["out"] / name).exists(), name
    metrics = run["metrics"]
    assert metrics["f1"] >= 0.8, f"test F1 {metrics['f1']:.3f} < 0.8"
    assert metrics["mape"] <= 15.0, f"teacher-forced MAPE {metrics['mape']:.2f}% > 15%"
    assert run["elapsed"] < 600.0, f"pipeline took {run['elapsed']:.0f}s"
    _report(
        7,
        f"end-to-end: F1 {metrics['f1']:.3f}, MAPE {metrics['mape']:.2f}%, "
        f"AUC {metrics['auc_roc']:.3f}, {run['elapsed']:.0f}s",
    )


def test_c8_determinism(e2e_runs):
    """Same seed twice: identical metrics JSON (timestamp excluded)."""
    dumps = []
    for run in e2e_runs:
        payload = dict(run["metrics"])
        payload.pop("created_at")
        dumps.append(json.dumps(payload, sort_keys=True))
    assert dumps[0] == dumps[1]
    _report(8, "two same-seed runs produced byte-identical metrics JSON")


def test_c9_tuning_contract():
    """Stubbed random search: argmin returned, [128, 512] bounds on 30/30 trials."""
    import datetime as dt

    from arbocast.preprocess import WindowedDataset

    rng = np.random.default_rng(5)
    x = rng.random((40, 5))
    ds = WindowedDataset(
        5, x, x.mean(axis=1), (x.mean(axis=1) > 0.5).astype(np.int8),
        np.array([dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(40)], dtype=object),
        np.array([SPLIT_TRAIN] * 30 + [SPLIT_VAL] * 10, dtype="<U5"),
    )
    space = SearchSpace()
    best, results = random_search(
        space, ds, seed=11, architecture=ARCH_SIMPLE,
        trainer=lambda trial: abs(trial.units[0] - 300),
    )
    assert len(results) == 30
    in_bounds = sum(
        1 for r in results if all(128 <= u <= 512 for u in r.config.units)
    )
    assert in_bounds == 30
    expected = min(results, key=lambda r: (abs(r.config.units[0] - 300), r.trial))
    assert best == expected.config
    _report(9, f"tuning contract: 30/30 trials in bounds, argmin winner units {best.units}")
