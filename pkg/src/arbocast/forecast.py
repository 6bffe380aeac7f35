"""Rolling one-step-ahead forecasts over a horizon.

The window of the most recent T scaled values predicts the next day; the
window then advances one day, absorbing either the observed value (teacher
forcing, used for test-set evaluation) or the model's own prediction
(autoregressive, for true out-of-sample horizons).  Outputs are mapped back
to case counts with the training-set min-max parameters and floored at
zero.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DataFormatError
from .nn import ModelParams, model_forward
from .preprocess import ScalerParams, inverse_transform

MODE_TEACHER_FORCED = "teacher_forced"
MODE_AUTOREGRESSIVE = "autoregressive"

Predictor = Callable[[np.ndarray], tuple[float, float]]


@dataclass(frozen=True)
class ForecastEntry:
    date: dt.date
    y_pred_cases: float  # inverse-transformed, floored at zero
    y_pred_norm: float  # raw model output on the normalized scale
    p_outbreak: float
    outbreak_flag: int
    y_obs_cases: float | None = None


@dataclass
class ForecastResult:
    mode: str
    entries: list[ForecastEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def predictions(self) -> np.ndarray:
        return np.array([e.y_pred_cases for e in self.entries])

    def observations(self) -> np.ndarray:
        return np.array(
            [np.nan if e.y_obs_cases is None else e.y_obs_cases for e in self.entries]
        )

    def to_csv(self, path, config_hash: str | None = None) -> None:
        """Plot-ready CSV: date,y_pred_cases,y_obs_cases,p_outbreak,outbreak_flag."""
        with open(path, "w", encoding="utf-8") as fh:
            if config_hash:
                fh.write(f"# config_hash={config_hash}\n")
            fh.write("date,y_pred_cases,y_obs_cases,p_outbreak,outbreak_flag\n")
            for e in self.entries:
                obs = "" if e.y_obs_cases is None else repr(e.y_obs_cases)
                fh.write(
                    f"{e.date.isoformat()},{e.y_pred_cases!r},{obs},"
                    f"{e.p_outbreak!r},{e.outbreak_flag}\n"
                )


def _as_predictor(model: ModelParams | Predictor) -> tuple[Predictor, int | None]:
    if isinstance(model, ModelParams):
        window_len = model.config.window_len

        def predict(window: np.ndarray) -> tuple[float, float]:
            p, y_hat, _ = model_forward(model, window, mode="eval")
            return p, y_hat

        return predict, window_len
    if callable(model):
        return model, None
    raise TypeError("model must be ModelParams or a callable predictor")


def rolling_forecast(
    model: ModelParams | Predictor,
    scaler: ScalerParams,
    history: Sequence[float] | np.ndarray,
    horizon: int,
    mode: str = MODE_TEACHER_FORCED,
    start_date: dt.date | None = None,
    observations: Sequence[float] | np.ndarray | None = None,
    window_len: int | None = None,
) -> ForecastResult:
    """Predict ``horizon`` consecutive days, advancing one day at a time.

    ``history`` holds scaled daily values ending the day before the first
    forecast.  In teacher-forced mode ``observations`` must supply the
    scaled observed value for every forecast day; in autoregressive mode the
    model's own normalized prediction is appended instead.  ``window_len``
    is only needed when ``model`` is a bare callable.
    """
    if mode not in (MODE_TEACHER_FORCED, MODE_AUTOREGRESSIVE):
        raise ValueError(f"unknown forecast mode {mode!r}")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    predict, model_window = _as_predictor(model)
    window = model_window if model_window is not None else window_len
    if window is None:
        raise ValueError("window_len is required with a callable predictor")

    working = list(np.asarray(history, dtype=float))
    if len(working) < window:
        raise DataFormatError(
            f"history has {len(working)} values; need at least window_len={window}"
        )
    if mode == MODE_TEACHER_FORCED:
        if observations is None or len(observations) < horizon:
            have = 0 if observations is None else len(observations)
            raise DataFormatError(
                f"teacher-forced forecast over {horizon} days needs observed values "
                f"for the full horizon, got {have}"
            )
        observations = np.asarray(observations, dtype=float)

    if start_date is None:
        start_date = dt.date(2000, 1, 1)

    entries = []
    for step in range(horizon):
        x = np.array(working[-window:])
        p, y_norm = predict(x)
        cases = inverse_transform(scaler, y_norm)
        obs_cases = None
        if mode == MODE_TEACHER_FORCED:
            obs_cases = inverse_transform(scaler, float(observations[step]))
        entries.append(
            ForecastEntry(
                date=start_date + dt.timedelta(days=step),
                y_pred_cases=max(cases, 0.0),
                y_pred_norm=float(y_norm),
                p_outbreak=float(p),
                outbreak_flag=1 if p > 0.5 else 0,
                y_obs_cases=obs_cases,
            )
        )
        if mode == MODE_TEACHER_FORCED:
            working.append(float(observations[step]))
        else:
            working.append(float(y_norm))

    return ForecastResult(mode=mode, entries=entries)
