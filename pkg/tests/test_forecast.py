"""Rolling forecast mechanics: window advancement, modes, inverse scaling."""
import datetime as dt

import numpy as np
import pytest

from arbocast.errors import DataFormatError
from arbocast.forecast import (
    MODE_AUTOREGRESSIVE,
    MODE_TEACHER_FORCED,
    rolling_forecast,
)
from arbocast.nn import ARCH_SIMPLE, default_config, init_params
from arbocast.preprocess import ScalerParams, transform

SCALER = ScalerParams(0.0, 200.0)
START = dt.date(2023, 1, 1)


def persistence_model(window):
    """Stub predictor: next value = last input, outbreak probability fixed."""
    return 0.25, float(window[-1])


class TestRollingForecast:
    def test_horizon_entry_count(self):
        history = np.linspace(0, 1, 30)
        result = rolling_forecast(
            persistence_model, SCALER, history, horizon=12,
            mode=MODE_AUTOREGRESSIVE, start_date=START, window_len=10,
        )
        assert len(result) == 12
        assert [e.date for e in result.entries] == [
            START + dt.timedelta(days=i) for i in range(12)
        ]

    def test_persistence_fixed_point(self):
        """Autoregressive persistence forecast stays at the last observation."""
        history = np.array([0.1, 0.5, 0.8, 0.65])
        result = rolling_forecast(
            persistence_model, SCALER, history, horizon=8,
            mode=MODE_AUTOREGRESSIVE, start_date=START, window_len=4,
        )
        for e in result.entries:
            assert e.y_pred_norm == pytest.approx(0.65)
            assert e.y_pred_cases == pytest.approx(0.65 * 200.0)

    def test_teacher_forced_window_contents(self):
        """Step t's input is exactly the observed days t-T..t-1 (naive-loop oracle)."""
        rng = np.random.default_rng(6)
        full = rng.random(40)
        T, horizon = 7, 15
        history = full[: 40 - horizon]
        observations = full[40 - horizon :]
        seen = []

        def spy(window):
            seen.append(window.copy())
            return 0.5, 0.0

        rolling_forecast(
            spy, SCALER, history, horizon=horizon,
            mode=MODE_TEACHER_FORCED, start_date=START,
            observations=observations, window_len=T,
        )
        for t in range(horizon):
            expected = full[40 - horizon + t - T : 40 - horizon + t]
            np.testing.assert_array_equal(seen[t], expected)

    def test_modes_agree_at_horizon_one(self):
        history = np.random.default_rng(3).random(20)
        kwargs = dict(start_date=START, window_len=5)
        ar = rolling_forecast(
            persistence_model, SCALER, history, 1, MODE_AUTOREGRESSIVE, **kwargs
        )
        tf = rolling_forecast(
            persistence_model, SCALER, history, 1, MODE_TEACHER_FORCED,
            observations=[0.123], **kwargs
        )
        assert ar.entries[0].y_pred_cases == tf.entries[0].y_pred_cases
        assert ar.entries[0].p_outbreak == tf.entries[0].p_outbreak

    def test_inverse_transform_consistency(self):
        """transform(inverse(y_norm)) recovers the model output to 1e-9."""
        history = np.random.default_rng(4).random(20)
        result = rolling_forecast(
            persistence_model, SCALER, history, horizon=6,
            mode=MODE_AUTOREGRESSIVE, start_date=START, window_len=5,
        )
        for e in result.entries:
            from arbocast.preprocess import inverse_transform

            unfloored = inverse_transform(SCALER, e.y_pred_norm)
            assert transform(SCALER, unfloored) == pytest.approx(e.y_pred_norm, abs=1e-9)

    def test_negative_predictions_floored(self):
        def negative_model(window):
            return 0.9, -0.4  # inverse-transforms to -80 cases

        history = np.zeros(10)
        result = rolling_forecast(
            negative_model, SCALER, history, horizon=3,
            mode=MODE_AUTOREGRESSIVE, start_date=START, window_len=5,
        )
        for e in result.entries:
            assert e.y_pred_cases == 0.0
            assert e.y_pred_norm == pytest.approx(-0.4)  # feedback is unfloored
            assert e.outbreak_flag == 1

    def test_real_model_end_to_end(self):
        params = init_params(
            default_config(ARCH_SIMPLE, 6, lstm_units=(4, 4), dropout_rate=0.0), seed=0
        )
        history = np.random.default_rng(8).random(12)
        result = rolling_forecast(
            params, SCALER, history, horizon=4, mode=MODE_AUTOREGRESSIVE, start_date=START
        )
        assert len(result) == 4
        for e in result.entries:
            assert 0.0 < e.p_outbreak < 1.0
            assert e.y_pred_cases >= 0.0
            assert e.outbreak_flag == (1 if e.p_outbreak > 0.5 else 0)

    def test_insufficient_history_rejected(self):
        with pytest.raises(DataFormatError, match="history"):
            rolling_forecast(
                persistence_model, SCALER, np.zeros(3), horizon=2,
                mode=MODE_AUTOREGRESSIVE, start_date=START, window_len=5,
            )

    def test_teacher_forced_needs_observations(self):
        with pytest.raises(DataFormatError, match="observed"):
            rolling_forecast(
                persistence_model, SCALER, np.zeros(10), horizon=5,
                mode=MODE_TEACHER_FORCED, start_date=START, window_len=5,
            )
        with pytest.raises(DataFormatError, match="observed"):
            rolling_forecast(
                persistence_model, SCALER, np.zeros(10), horizon=5,
                mode=MODE_TEACHER_FORCED, start_date=START,
                observations=[0.1, 0.2], window_len=5,
            )

    def test_csv_output(self, tmp_path):
        history = np.random.default_rng(1).random(20)
        result = rolling_forecast(
            persistence_model, SCALER, history, horizon=4,
            mode=MODE_TEACHER_FORCED, start_date=START,
            observations=[0.2, 0.4, 0.6, 0.8], window_len=5,
        )
        path = tmp_path / "forecast.csv"
        result.to_csv(path, config_hash="0dd")
        lines = path.read_text().splitlines()
        assert lines[0] == "# config_hash=0dd"
        assert lines[1] == "date,y_pred_cases,y_obs_cases,p_outbreak,outbreak_flag"
        assert len(lines) == 2 + 4
        assert lines[2].split(",")[2] == repr(0.2 * 200.0)  # observations inverse-scaled
