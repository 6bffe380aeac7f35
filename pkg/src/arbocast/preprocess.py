"""Min-max scaling, sliding-window construction, and chronological splits.

The daily series is scaled with parameters fitted on training targets only,
cut into fixed-length input windows whose regression target is the next
day's value, and tagged train/val/test without shuffling: validation follows
training chronologically and the test split is the held-out final year.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data import CaseSeries, OutbreakLabels
from .errors import DataFormatError

SPLIT_NONE = "none"
SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_TEST = "test"

WINDOW_CHOICES = (60, 90, 120)


@dataclass(frozen=True)
class ScalerParams:
    """Min-max parameters; fitted on the training split only."""

    x_min: float
    x_max: float
    fitted_on: str = SPLIT_TRAIN

    def __post_init__(self):
        if self.x_max < self.x_min:
            raise ValueError("x_max must be >= x_min")

    @property
    def degenerate(self) -> bool:
        return self.x_max == self.x_min


def fit_scaler(values: Sequence[float] | np.ndarray, fitted_on: str = SPLIT_TRAIN) -> ScalerParams:
    """Min and max of the training sequence."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DataFormatError("cannot fit a scaler on an empty sequence")
    return ScalerParams(float(arr.min()), float(arr.max()), fitted_on)


def transform(params: ScalerParams, x):
    """(x - x_min) / (x_max - x_min); out-of-range values are not clipped.

    A degenerate scaler (x_max == x_min) maps everything to 0.0.
    """
    x = np.asarray(x, dtype=float)
    if params.degenerate:
        out = np.zeros_like(x)
    else:
        out = (x - params.x_min) / (params.x_max - params.x_min)
    return float(out) if out.ndim == 0 else out


def inverse_transform(params: ScalerParams, z):
    """z * (x_max - x_min) + x_min; exact inverse of transform."""
    z = np.asarray(z, dtype=float)
    out = z * (params.x_max - params.x_min) + params.x_min
    return float(out) if out.ndim == 0 else out


@dataclass
class WindowedDataset:
    """Aligned (window, next-day value, outbreak label) samples.

    ``x[j]`` holds the ``window_len`` scaled values preceding
    ``target_dates[j]``, ``y_reg[j]`` the scaled value on the target day and
    ``y_clf[j]`` the outbreak label of the month containing it.
    """

    window_len: int
    x: np.ndarray  # (n, window_len) float64
    y_reg: np.ndarray  # (n,) float64
    y_clf: np.ndarray  # (n,) int8
    target_dates: np.ndarray  # (n,) object (datetime.date)
    split: np.ndarray  # (n,) unicode

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def subset(self, mask: np.ndarray) -> "WindowedDataset":
        return WindowedDataset(
            self.window_len,
            self.x[mask],
            self.y_reg[mask],
            self.y_clf[mask],
            self.target_dates[mask],
            self.split[mask],
        )

    def split_counts(self) -> dict[str, int]:
        return {tag: int((self.split == tag).sum()) for tag in np.unique(self.split)}

    def to_csv(self, path, config_hash: str | None = None) -> None:
        """Write `target_date,y_reg,y_clf,split,x_0..x_{T-1}` for inspection."""
        with open(path, "w", encoding="utf-8") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            cols = ["target_date", "y_reg", "y_clf", "split"]
            cols += [f"x_{i}" for i in range(self.window_len)]
            fh.write(",".join(cols) + "\n")
            for j in range(self.n):
                row = [
                    self.target_dates[j].isoformat(),
                    repr(float(self.y_reg[j])),
                    str(int(self.y_clf[j])),
                    str(self.split[j]),
                ]
                row += [repr(float(v)) for v in self.x[j]]
                fh.write(",".join(row) + "\n")


def make_windows(
    dates: Sequence[dt.date],
    values: np.ndarray,
    labels: OutbreakLabels,
    window_len: int,
) -> WindowedDataset:
    """Slide a window of ``window_len`` days over the scaled series.

    Sample j covers values[j .. j+T-1] and targets day j+T, so a series of
    length L yields exactly L - T samples.  Every target day's month must
    carry an outbreak label.
    """
    values = np.asarray(values, dtype=float)
    n_days = values.shape[0]
    if window_len < 1:
        raise ValueError("window_len must be positive")
    if n_days <= window_len:
        raise DataFormatError(
            f"series has {n_days} days; need more than window_len={window_len}"
        )
    if len(dates) != n_days:
        raise ValueError("dates and values must have equal length")

    windows = np.lib.stride_tricks.sliding_window_view(values, window_len)
    n = n_days - window_len
    x = windows[:n].copy()
    y_reg = values[window_len:].copy()
    target_dates = np.array(dates[window_len:], dtype=object)
    y_clf = np.array([labels.label_for(d) for d in target_dates], dtype=np.int8)
    split = np.full(n, SPLIT_NONE, dtype="<U5")
    return WindowedDataset(window_len, x, y_reg, y_clf, target_dates, split)


def split_tags(
    target_dates: Sequence[dt.date] | np.ndarray,
    test_year: int,
    val_fraction: float,
) -> np.ndarray:
    """Tag samples test (held-out year) then train/val chronologically.

    Pre-test samples are ordered by date; the first floor((1-vf)*n) are
    train, the rest val.  No shuffling.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    dates = list(target_dates)
    tags = np.full(len(dates), SPLIT_NONE, dtype="<U5")
    test_mask = np.array([d.year == test_year for d in dates], dtype=bool)
    tags[test_mask] = SPLIT_TEST

    pre_idx = np.flatnonzero(~test_mask)
    pre_idx = pre_idx[np.argsort([dates[i] for i in pre_idx], kind="stable")]
    n_train = int((1.0 - val_fraction) * len(pre_idx))
    tags[pre_idx[:n_train]] = SPLIT_TRAIN
    tags[pre_idx[n_train:]] = SPLIT_VAL
    return tags


def chronological_split(
    ds: WindowedDataset, test_year: int, val_fraction: float
) -> WindowedDataset:
    """Return a copy of ``ds`` with train/val/test tags assigned."""
    tags = split_tags(ds.target_dates, test_year, val_fraction)
    if not (tags == SPLIT_TEST).any():
        raise DataFormatError(f"no samples fall in test year {test_year}")
    return replace(ds, split=tags)


def prepare_dataset(
    cases: CaseSeries,
    labels: OutbreakLabels,
    window_len: int,
    test_year: int,
    val_fraction: float = 0.2,
) -> tuple[WindowedDataset, ScalerParams]:
    """Scale, window, and split a case series without leakage.

    The scaler is fitted on the raw values of train-tagged target days only,
    then applied to the whole series before windowing, so validation and
    test data never influence the normalization.
    """
    raw = np.asarray(cases.counts, dtype=float)
    if raw.shape[0] <= window_len:
        raise DataFormatError(
            f"series has {raw.shape[0]} days; need more than window_len={window_len}"
        )
    target_dates = cases.dates[window_len:]
    tags = split_tags(target_dates, test_year, val_fraction)
    if not (tags == SPLIT_TEST).any():
        raise DataFormatError(f"no samples fall in test year {test_year}")

    train_targets = raw[window_len:][tags == SPLIT_TRAIN]
    if train_targets.size == 0:
        raise DataFormatError("no training samples before the test year")
    scaler = fit_scaler(train_targets)

    scaled = transform(scaler, raw)
    ds = make_windows(cases.dates, scaled, labels, window_len)
    return replace(ds, split=tags), scaler
