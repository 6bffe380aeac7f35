"""Random-search hyperparameter tuning and expanding-window cross-validation.

The search samples layer widths uniformly from [128, 512], trains each
candidate for a fixed 50 epochs with early stopping disabled, and keeps the
configuration with the lowest validation loss (earliest trial wins ties).
Cross-validation splits the pre-test samples into k+1 equal blocks: fold i
trains on the first i blocks and validates on block i+1, so validation
always postdates training.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DataFormatError
from .metrics import MetricsReport, auc_roc, classify, f1_score, percentage_errors
from .nn import ARCH_SIMPLE, ModelConfig, default_config, init_params, model_forward
from .preprocess import (
    SPLIT_NONE,
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VAL,
    ScalerParams,
    WindowedDataset,
    inverse_transform,
)
from .training import TrainConfig, train

UNITS_MIN = 128
UNITS_MAX = 512
N_TRIALS = 30
TRIAL_EPOCHS = 50


@dataclass(frozen=True)
class SearchSpace:
    units_min: int = UNITS_MIN
    units_max: int = UNITS_MAX
    n_trials: int = N_TRIALS
    trial_epochs: int = TRIAL_EPOCHS

    def __post_init__(self):
        if not 0 < self.units_min <= self.units_max:
            raise ValueError("invalid unit-count bounds")
        if self.n_trials < 1 or self.trial_epochs < 1:
            raise ValueError("n_trials and trial_epochs must be positive")


@dataclass(frozen=True)
class TrialConfig:
    units: tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class TrialResult:
    trial: int
    config: TrialConfig
    val_loss: float


def sample_trials(space: SearchSpace, n_layers: int, seed: int) -> list[TrialConfig]:
    """The (seed, space) pair fully determines the sampled configurations."""
    rng = np.random.default_rng(seed)
    trials = []
    for _ in range(space.n_trials):
        units = tuple(
            int(u) for u in rng.integers(space.units_min, space.units_max + 1, size=n_layers)
        )
        trials.append(TrialConfig(units=units, seed=int(rng.integers(0, 2**31 - 1))))
    return trials


def _train_trial(
    trial: TrialConfig,
    ds: WindowedDataset,
    architecture: str,
    window_len: int,
    trial_epochs: int,
    batch_size: int,
    lr_init: float,
    dropout_rate: float,
) -> float:
    """Default trial evaluation: best validation loss over a fixed-epoch run."""
    config = default_config(
        architecture, window_len, lstm_units=trial.units, dropout_rate=dropout_rate
    )
    params = init_params(config, seed=trial.seed)
    cfg = TrainConfig(
        epochs=trial_epochs,
        batch_size=batch_size,
        patience_stop=None,
        plateau_patience=None,
        lr_init=lr_init,
        seed=trial.seed,
    )
    _, history = train(params, ds, cfg)
    return history.best_val_loss


def random_search(
    space: SearchSpace,
    ds: WindowedDataset,
    seed: int,
    architecture: str = ARCH_SIMPLE,
    trainer: Callable[[TrialConfig], float] | None = None,
    batch_size: int = 32,
    lr_init: float = 1e-3,
    dropout_rate: float = 0.2,
    jobs: int = 1,
) -> tuple[TrialConfig, list[TrialResult]]:
    """Evaluate ``space.n_trials`` sampled configurations; argmin val loss wins.

    ``trainer`` may be injected (it receives a TrialConfig and returns a
    validation loss); by default each trial trains a real model on ``ds``
    for ``space.trial_epochs`` epochs with early stopping disabled.  With
    ``jobs > 1`` the default trainer runs trials in parallel processes;
    results are gathered in trial order either way.
    """
    n_layers = 2 if architecture == ARCH_SIMPLE else 3
    trials = sample_trials(space, n_layers, seed)

    if trainer is not None:
        losses = [trainer(trial) for trial in trials]
    elif jobs > 1:
        args = [
            (trial, ds, architecture, ds.window_len, space.trial_epochs, batch_size, lr_init, dropout_rate)
            for trial in trials
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            losses = list(pool.map(_train_trial_star, args))
    else:
        losses = [
            _train_trial(
                trial, ds, architecture, ds.window_len, space.trial_epochs,
                batch_size, lr_init, dropout_rate,
            )
            for trial in trials
        ]

    results = [
        TrialResult(trial=i, config=trial, val_loss=float(loss))
        for i, (trial, loss) in enumerate(zip(trials, losses))
    ]
    best = min(results, key=lambda r: (r.val_loss, r.trial))
    return best.config, results


def _train_trial_star(args) -> float:
    return _train_trial(*args)


def write_trial_log(path, results: Sequence[TrialResult], config_hash: str | None = None) -> None:
    """Trial log CSV: trial,units_l1,units_l2[,units_l3],val_loss,seed."""
    if not results:
        raise ValueError("no trial results to write")
    n_layers = len(results[0].config.units)
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        cols = ["trial"] + [f"units_l{i + 1}" for i in range(n_layers)] + ["val_loss", "seed"]
        fh.write(",".join(cols) + "\n")
        for r in results:
            row = [str(r.trial)] + [str(u) for u in r.config.units]
            row += [repr(r.val_loss), str(r.config.seed)]
            fh.write(",".join(row) + "\n")


def cv_fold_bounds(n_samples: int, k: int) -> list[tuple[int, int]]:
    """(train_end, val_end) index bounds per fold; validation is
    [train_end, val_end).

    Samples split into k+1 equal blocks, remainder prepended to the first
    training block; fold i in 1..k trains on blocks 1..i and validates on
    block i+1.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    block = n_samples // (k + 1)
    if block == 0:
        raise DataFormatError(
            f"cross-validation needs at least {k + 1} samples, got {n_samples}"
        )
    rem = n_samples - block * (k + 1)
    bounds = []
    for i in range(1, k + 1):
        train_end = rem + i * block
        bounds.append((train_end, train_end + block))
    return bounds


def ts_cross_validate(
    ds: WindowedDataset,
    k: int,
    train_cfg: TrainConfig,
    model_cfg: ModelConfig,
    scaler: ScalerParams,
    seed: int = 0,
) -> list[MetricsReport]:
    """Expanding-window CV over the pre-test samples; one report per fold.

    Regression errors are computed on inverse-transformed case counts.
    ``auc_roc`` is None for folds whose validation block is single-class.
    """
    pre = ds.subset(ds.split != SPLIT_TEST)
    order = np.argsort(pre.target_dates, kind="stable")
    pre = pre.subset(order)
    reports = []
    for fold, (train_end, val_end) in enumerate(cv_fold_bounds(pre.n, k)):
        tags = np.full(pre.n, SPLIT_NONE, dtype="<U5")
        tags[:train_end] = SPLIT_TRAIN
        tags[train_end:val_end] = SPLIT_VAL
        fold_ds = replace(pre, split=tags)

        params = init_params(model_cfg, seed=seed + fold)
        fold_cfg = replace(train_cfg, seed=seed + fold)
        best, _ = train(params, fold_ds, fold_cfg)

        val = fold_ds.subset(tags == SPLIT_VAL)
        p, y_hat, _ = model_forward(best, val.x, mode="eval")
        pred_cases = np.maximum(inverse_transform(scaler, y_hat), 0.0)
        actual_cases = inverse_transform(scaler, val.y_reg)
        errs, excluded = percentage_errors(pred_cases, actual_cases)
        single = val.y_clf.min() == val.y_clf.max()
        reports.append(
            MetricsReport(
                f1=f1_score(classify(p), val.y_clf),
                auc_roc=None if single else auc_roc(p, val.y_clf),
                mape=float(errs.mean()),
                medape=float(np.median(errs)),
                n_samples=val.n,
                excluded_zero_actuals=excluded,
            )
        )
    return reports


def write_fold_metrics(path, reports: Sequence[MetricsReport], config_hash: str | None = None) -> None:
    """Fold metrics CSV: fold,f1,auc_roc,mape,medape,n."""
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write("fold,f1,auc_roc,mape,medape,n\n")
        for fold, r in enumerate(reports, start=1):
            auc = "" if r.auc_roc is None else repr(r.auc_roc)
            fh.write(f"{fold},{r.f1!r},{auc},{r.mape!r},{r.medape!r},{r.n_samples}\n")
