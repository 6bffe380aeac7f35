"""Classification and regression metrics with bootstrap confidence intervals.

F1 follows the usual harmonic-mean definition with a 0 fallback when there
are no predicted or actual positives.  AUC-ROC is the Mann-Whitney
statistic: the fraction of (positive, negative) pairs ranked correctly,
ties counting one half.  MAPE and MedAPE exclude pairs whose actual value
is zero and report the exclusion count.  Confidence intervals come from
percentile bootstrap over resampled test indices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DataFormatError, NumericError

DECISION_THRESHOLD = 0.5


def classify(scores, threshold: float = DECISION_THRESHOLD) -> np.ndarray:
    """Binary labels from probabilities: 1 iff score > threshold."""
    return (np.asarray(scores, dtype=float) > threshold).astype(np.int8)


def f1_score(pred: Sequence[int], actual: Sequence[int]) -> float:
    """Harmonic mean of precision and recall; 0.0 when undefined."""
    pred = np.asarray(pred)
    actual = np.asarray(actual)
    if pred.shape != actual.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    tp = int(np.sum((pred == 1) & (actual == 1)))
    fp = int(np.sum((pred == 1) & (actual == 0)))
    fn = int(np.sum((pred == 0) & (actual == 1)))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    mean_rank = starts + (counts + 1) / 2.0
    return mean_rank[inverse]


def auc_roc(scores: Sequence[float], actual: Sequence[int]) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counted one half."""
    scores = np.asarray(scores, dtype=float)
    actual = np.asarray(actual)
    if scores.shape != actual.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {actual.shape}")
    pos = actual == 1
    n_pos = int(pos.sum())
    n_neg = int(actual.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataFormatError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def percentage_errors(pred, actual) -> tuple[np.ndarray, int]:
    """Absolute percentage errors, excluding zero-actual pairs.

    Returns (errors in percent, number of excluded pairs).
    """
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {actual.shape}")
    included = actual != 0.0
    excluded = int(np.sum(~included))
    if not included.any():
        raise DataFormatError("all pairs have zero actual value; MAPE undefined")
    errs = np.abs(pred[included] - actual[included]) / np.abs(actual[included]) * 100.0
    return errs, excluded


def mape(pred, actual) -> float:
    """Mean absolute percentage error (percent), zero-actual pairs excluded."""
    errs, _ = percentage_errors(pred, actual)
    return float(errs.mean())


def medape(pred, actual) -> float:
    """Median absolute percentage error (percent), zero-actual pairs excluded."""
    errs, _ = percentage_errors(pred, actual)
    return float(np.median(errs))


def bootstrap_ci(
    metric: Callable[..., float],
    arrays: Sequence,
    n_iter: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    class_array: int | None = None,
) -> tuple[float, float]:
    """Percentile bootstrap interval for ``metric(*arrays)``.

    Index sets are resampled with replacement ``n_iter`` times and the
    metric recomputed per resample; the interval is the (alpha/2,
    1-alpha/2) percentiles of that distribution, linearly interpolated.
    When ``class_array`` names one of the inputs, resamples where it is
    single-class are discarded and redrawn, bounded at 10 * n_iter total
    draws.
    """
    arrays = [np.asarray(a) for a in arrays]
    n = arrays[0].shape[0]
    if n == 0:
        raise ValueError("empty input")
    if any(a.shape[0] != n for a in arrays):
        raise ValueError("input arrays must share their first dimension")

    rng = np.random.default_rng(seed)
    stats = np.empty(n_iter, dtype=float)
    draws = 0
    max_draws = 10 * n_iter
    for k in range(n_iter):
        while True:
            draws += 1
            if draws > max_draws:
                raise NumericError(
                    "bootstrap redraw bound exceeded: resamples are persistently "
                    "single-class (pathological class imbalance)"
                )
            idx = rng.integers(0, n, size=n)
            if class_array is not None:
                labels = arrays[class_array][idx]
                if labels.min() == labels.max():
                    continue
            break
        stats[k] = metric(*(a[idx] for a in arrays))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return float(lo), float(hi)


@dataclass
class MetricsReport:
    """Per-task metrics for one evaluation, with optional bootstrap CIs.

    ``auc_roc`` may be None when the evaluated slice is single-class (small
    cross-validation folds); intervals, when present, bracket the full-sample
    point estimate.
    """

    f1: float
    auc_roc: float | None
    mape: float
    medape: float
    n_samples: int
    excluded_zero_actuals: int = 0
    ci: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.f1 <= 1.0:
            raise ValueError(f"f1 out of range: {self.f1}")
        if self.auc_roc is not None and not 0.0 <= self.auc_roc <= 1.0:
            raise ValueError(f"auc_roc out of range: {self.auc_roc}")
        if self.mape < 0 or self.medape < 0:
            raise ValueError("percentage errors must be non-negative")
        for name, (lo, hi, _level) in self.ci.items():
            point = getattr(self, name)
            if point is None or not lo <= point <= hi:
                raise ValueError(
                    f"CI for {name} does not bracket the point estimate: "
                    f"[{lo}, {hi}] vs {point}"
                )

    def to_json_dict(self) -> dict:
        return {
            "f1": self.f1,
            "auc_roc": self.auc_roc,
            "mape": self.mape,
            "medape": self.medape,
            "n": self.n_samples,
            "excluded_zero_actuals": self.excluded_zero_actuals,
            "ci": {
                name: {"lo": lo, "hi": hi, "level": level}
                for name, (lo, hi, level) in self.ci.items()
            },
        }

    def to_json(self, **extra) -> str:
        payload = self.to_json_dict()
        payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, payload: dict) -> "MetricsReport":
        ci = {
            name: (entry["lo"], entry["hi"], entry["level"])
            for name, entry in payload.get("ci", {}).items()
        }
        return cls(
            f1=payload["f1"],
            auc_roc=payload["auc_roc"],
            mape=payload["mape"],
            medape=payload["medape"],
            n_samples=payload["n"],
            excluded_zero_actuals=payload.get("excluded_zero_actuals", 0),
            ci=ci,
        )


def compute_report(
    scores: np.ndarray,
    actual_labels: np.ndarray,
    pred_values: np.ndarray,
    actual_values: np.ndarray,
    bootstrap: bool = False,
    n_iter: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> MetricsReport:
    """Build a MetricsReport from raw predictions.

    Classification metrics use the 0.5 decision threshold on ``scores``;
    regression metrics compare ``pred_values`` with ``actual_values``.
    When ``bootstrap`` is set, percentile intervals are attached for f1 and
    auc_roc (the classification metrics that the uncertainty analysis
    targets).
    """
    scores = np.asarray(scores, dtype=float)
    actual_labels = np.asarray(actual_labels)
    f1 = f1_score(classify(scores), actual_labels)
    single_class = actual_labels.min() == actual_labels.max()
    auc = None if single_class else auc_roc(scores, actual_labels)
    errs, excluded = percentage_errors(pred_values, actual_values)

    ci: dict[str, tuple[float, float, float]] = {}
    if bootstrap and not single_class:
        lo, hi = bootstrap_ci(
            lambda s, a: f1_score(classify(s), a),
            (scores, actual_labels),
            n_iter=n_iter,
            level=level,
            seed=seed,
            class_array=1,
        )
        ci["f1"] = (min(lo, f1), max(hi, f1), level)
        lo, hi = bootstrap_ci(
            auc_roc,
            (scores, actual_labels),
            n_iter=n_iter,
            level=level,
            seed=seed + 1,
            class_array=1,
        )
        auc_point = auc if auc is not None else 0.0
        ci["auc_roc"] = (min(lo, auc_point), max(hi, auc_point), level)

    return MetricsReport(
        f1=f1,
        auc_roc=auc,
        mape=float(errs.mean()),
        medape=float(np.median(errs)),
        n_samples=int(scores.shape[0]),
        excluded_zero_actuals=excluded,
        ci=ci,
    )
