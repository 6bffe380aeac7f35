"""arbocast: multitask LSTM forecasting of arboviral outbreaks and case counts."""

__version__ = "0.1.0"

from .data import (
    CaseSeries,
    Disease,
    DISEASE_PERCENTILE,
    IncidenceSeries,
    OutbreakLabels,
    PopulationTable,
    interpolate_population,
    label_outbreaks,
    monthly_incidence,
    outbreak_threshold,
    parse_case_csv,
    parse_population_csv,
)
from .errors import ArbocastError, DataFormatError, NumericError, UsageError
from .forecast import ForecastResult, rolling_forecast
from .metrics import (
    MetricsReport,
    auc_roc,
    bootstrap_ci,
    classify,
    compute_report,
    f1_score,
    mape,
    medape,
)
from .nn import (
    LstmLayerWeights,
    ModelConfig,
    ModelParams,
    default_config,
    init_params,
    load_model,
    lstm_cell_forward,
    model_backward,
    model_forward,
    multitask_loss,
    save_model,
)
from .preprocess import (
    ScalerParams,
    WindowedDataset,
    chronological_split,
    fit_scaler,
    inverse_transform,
    make_windows,
    prepare_dataset,
    transform,
)
from .synth import OutbreakInjection, SynthSpec, default_synth_spec, synth_generate
from .training import AdamState, TrainConfig, TrainHistory, adam_step, train
from .tuning import SearchSpace, TrialConfig, TrialResult, random_search, ts_cross_validate
