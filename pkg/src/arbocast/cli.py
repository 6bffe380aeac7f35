"""Command-line pipeline: synth | ingest | label | tune | train | evaluate | forecast.

Each subcommand reads the effective RunConfig (config file plus flag
overrides), writes its artifacts under the output directory, and stamps
them with the configuration hash.  Exit codes: 0 success, 1 usage error,
2 data error, 3 numeric failure; errors go to stderr with an
``ERROR:<code>:`` prefix.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

from . import data as core
from .config import RunConfig, build_config, config_hash, parse_config_file
from .errors import DataFormatError, NumericError, UsageError
from .forecast import MODE_AUTOREGRESSIVE, MODE_TEACHER_FORCED, rolling_forecast
from .metrics import compute_report
from .nn import default_config, init_params, load_model, model_forward, save_model
from .preprocess import (
    SPLIT_TEST,
    WINDOW_CHOICES,
    inverse_transform,
    prepare_dataset,
    transform,
)
from .synth import default_synth_spec, synth_generate, write_case_csv, write_population_csv
from .training import TrainConfig, train
from .tuning import SearchSpace, random_search, ts_cross_validate, write_fold_metrics, write_trial_log

SUBCOMMANDS = ("synth", "ingest", "label", "tune", "train", "evaluate", "forecast")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures through our exit codes
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arbocast", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="|".join(SUBCOMMANDS))
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, add_help=True)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="random seed (overrides config and env)")
        p.add_argument("--window", type=int, choices=WINDOW_CHOICES, dest="window_len")
        p.add_argument(
            "--arch", choices=("simple", "bidi"), dest="architecture",
            help="model architecture",
        )
        p.add_argument("--jobs", type=int, help="parallel tuning trials")
        p.add_argument("--out", dest="out_dir", help="artifact directory")
        p.add_argument(
            "--all", action="store_true",
            help="run the subcommand for all three diseases in turn",
        )
    return parser


def _flag_overrides(args: argparse.Namespace, **extra) -> dict:
    overrides = {
        "seed": args.seed,
        "window_len": args.window_len,
        "architecture": {"bidi": "bidirectional"}.get(args.architecture, args.architecture),
        "jobs": args.jobs,
        "out_dir": args.out_dir,
    }
    overrides.update(extra)
    return overrides


def _effective_config(args: argparse.Namespace) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else None
    return build_config(file_values, _flag_overrides(args))


def _load_series(cfg: RunConfig, stats_out: dict | None = None) -> tuple[core.CaseSeries, core.PopulationTable]:
    cases_path = cfg.resolved_cases_csv()
    pop_path = cfg.resolved_population_csv()
    with open(cases_path, "r", encoding="utf-8") as fh:
        series = core.parse_case_csv(
            fh, disease=cfg.disease, municipality=cfg.municipality, stats_out=stats_out
        )
    with open(pop_path, "r", encoding="utf-8") as fh:
        population = core.parse_population_csv(fh)
    return series, population


def _labels_for(cfg: RunConfig, series: core.CaseSeries, population: core.PopulationTable):
    """Incidence, threshold, and labels under the configured percentile policy.

    The threshold is computed on training-period months only (years before
    the held-out test year) unless threshold_scope = full.
    """
    incidence = core.monthly_incidence(series, population)
    percentile = (
        cfg.percentile
        if cfg.percentile is not None
        else core.DISEASE_PERCENTILE[core.Disease(cfg.disease)]
    )
    if cfg.threshold_scope == "full":
        scope = incidence
    else:  # training scope (validated by RunConfig)
        keep = [i for i, m in enumerate(incidence.months) if m.year < cfg.test_year]
        if not keep:
            raise DataFormatError(
                f"no months before test year {cfg.test_year} to compute a threshold on"
            )
        scope = core.IncidenceSeries(
            incidence.disease,
            tuple(incidence.months[i] for i in keep),
            tuple(incidence.values[i] for i in keep),
        )
    threshold = core.outbreak_threshold(scope, percentile)
    labels = core.label_outbreaks(incidence, threshold, percentile)
    return incidence, threshold, labels


def _model_config(cfg: RunConfig):
    return default_config(
        cfg.architecture, cfg.window_len, lstm_units=cfg.units, dropout_rate=cfg.dropout
    )


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        patience_stop=cfg.patience_stop,
        lr_init=cfg.lr_init,
        plateau_factor=cfg.plateau_factor,
        plateau_patience=cfg.plateau_patience,
        lr_min=cfg.lr_min,
        seed=cfg.seed,
    )


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(cfg: RunConfig) -> int:
    spec = dataclasses.replace(
        default_synth_spec(
            seed=cfg.seed,
            start_year=cfg.synth_start_year,
            n_years=cfg.synth_years,
            outbreaks_per_year=cfg.synth_outbreaks_per_year,
            multiplier=cfg.synth_multiplier,
        ),
        base_rate=cfg.synth_base,
        seasonal_amplitude=cfg.synth_amplitude,
        period_days=cfg.synth_period,
        noise_dispersion=cfg.synth_dispersion,
        population_base=cfg.population_base,
        population_growth_per_year=cfg.population_growth,
    )
    series, population = synth_generate(spec, disease=cfg.disease)
    out = _out_dir(cfg)
    chash = config_hash(cfg)
    write_case_csv(cfg.resolved_cases_csv(), series, chash)
    write_population_csv(cfg.resolved_population_csv(), population, chash)
    print(f"wrote {cfg.resolved_cases_csv()} ({len(series)} days) and {cfg.resolved_population_csv()}")
    return EXIT_OK


def cmd_ingest(cfg: RunConfig) -> int:
    stats: dict = {}
    series, population = _load_series(cfg, stats_out=stats)
    report = {
        "disease": series.disease.value,
        "municipality": series.municipality,
        "start": series.dates[0].isoformat(),
        "end": series.dates[-1].isoformat(),
        "n_days": len(series),
        "total_cases": int(sum(series.counts)),
        "population_years": list(population.years),
        "config_hash": config_hash(cfg),
        **stats,
    }
    out = _out_dir(cfg) / "ingest_report.json"
    out.write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_label(cfg: RunConfig) -> int:
    series, population = _load_series(cfg)
    incidence, threshold, labels = _labels_for(cfg, series, population)
    out = _out_dir(cfg)
    chash = config_hash(cfg)
    labels_path = out / "labels.csv"
    with open(labels_path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={chash}\n")
        fh.write("month,incidence,label\n")
        for month, value, label in zip(incidence.months, incidence.values, labels.labels):
            fh.write(f"{month:%Y-%m},{value!r},{label}\n")
    meta = {
        "disease": series.disease.value,
        "threshold": threshold,
        "percentile": labels.percentile,
        "threshold_scope": cfg.threshold_scope,
        "n_outbreak_months": int(sum(labels.labels)),
        "n_months": len(labels.labels),
        "config_hash": chash,
    }
    (out / "labels_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    print(f"wrote {labels_path}: {meta['n_outbreak_months']}/{meta['n_months']} outbreak months, threshold {threshold:.4f}")
    return EXIT_OK


def cmd_tune(cfg: RunConfig) -> int:
    series, population = _load_series(cfg)
    _, _, labels = _labels_for(cfg, series, population)
    ds, _ = prepare_dataset(series, labels, cfg.window_len, cfg.test_year, cfg.val_fraction)
    space = SearchSpace(
        units_min=cfg.units_min,
        units_max=cfg.units_max,
        n_trials=cfg.n_trials,
        trial_epochs=cfg.trial_epochs,
    )
    best, results = random_search(
        space,
        ds,
        cfg.seed,
        architecture=cfg.architecture,
        batch_size=cfg.batch_size,
        lr_init=cfg.lr_init,
        dropout_rate=cfg.dropout,
        jobs=cfg.jobs,
    )
    out = _out_dir(cfg)
    chash = config_hash(cfg)
    write_trial_log(out / "trials.csv", results, chash)
    best_loss = min(r.val_loss for r in results)
    payload = {
        "units": list(best.units),
        "architecture": cfg.architecture,
        "window_len": cfg.window_len,
        "val_loss": best_loss,
        "config_hash": chash,
    }
    (out / "best_config.json").write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    print(f"best units {best.units} (val loss {best_loss:.6f}); set `units = {','.join(map(str, best.units))}` to train with them")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    series, population = _load_series(cfg)
    _, _, labels = _labels_for(cfg, series, population)
    ds, scaler = prepare_dataset(series, labels, cfg.window_len, cfg.test_year, cfg.val_fraction)
    model_cfg = _model_config(cfg)
    train_cfg = _train_config(cfg)
    params = init_params(model_cfg, seed=cfg.seed)
    best, history = train(params, ds, train_cfg)

    out = _out_dir(cfg)
    chash = config_hash(cfg)
    save_model(
        out / "model.npz",
        best,
        scaler,
        extra_meta={
            "disease": cfg.disease,
            "test_year": cfg.test_year,
            "config_hash": chash,
            "best_epoch": history.best_epoch,
            "val_loss": history.best_val_loss,
        },
    )
    history.to_csv(out / "history.csv", chash)
    if cfg.cv_folds >= 2:
        reports = ts_cross_validate(ds, cfg.cv_folds, train_cfg, model_cfg, scaler, seed=cfg.seed)
        write_fold_metrics(out / "cv_metrics.csv", reports, chash)
    print(
        f"trained {cfg.architecture} T={cfg.window_len}: best epoch {history.best_epoch}, "
        f"val loss {history.best_val_loss:.6f}, stopped at {history.stopped_epoch}"
    )
    return EXIT_OK


def _test_slice(cfg: RunConfig):
    """Shared by evaluate and forecast: model, scaler, dataset, test mask."""
    model_path = Path(cfg.out_dir) / "model.npz"
    if not model_path.exists():
        raise DataFormatError(f"no trained model at {model_path}; run `arbocast train` first")
    params, scaler, meta = load_model(model_path)
    series, population = _load_series(cfg)
    _, _, labels = _labels_for(cfg, series, population)
    ds, _ = prepare_dataset(
        series, labels, params.config.window_len, cfg.test_year, cfg.val_fraction
    )
    return params, scaler, meta, series, ds


def cmd_evaluate(cfg: RunConfig) -> int:
    params, scaler, meta, _, ds = _test_slice(cfg)
    test = ds.subset(ds.split == SPLIT_TEST)
    if test.n == 0:
        raise DataFormatError(f"no test samples in year {cfg.test_year}")
    p, y_hat, _ = model_forward(params, test.x, mode="eval")
    pred_cases = np.maximum(inverse_transform(scaler, y_hat), 0.0)
    actual_cases = inverse_transform(scaler, test.y_reg)
    report = compute_report(
        p,
        test.y_clf,
        pred_cases,
        actual_cases,
        bootstrap=True,
        n_iter=cfg.bootstrap_iters,
        level=cfg.ci_level,
        seed=cfg.seed,
    )
    payload = report.to_json(
        disease=cfg.disease,
        architecture=params.config.architecture,
        window_len=params.config.window_len,
        test_year=cfg.test_year,
        config_hash=config_hash(cfg),
        created_at=dt.datetime.now(dt.timezone.utc).isoformat(),
    )
    out = _out_dir(cfg) / "metrics.json"
    out.write_text(payload, encoding="utf-8")
    print(payload)
    return EXIT_OK


def cmd_forecast(cfg: RunConfig) -> int:
    params, scaler, meta, series, ds = _test_slice(cfg)
    scaled = transform(scaler, np.asarray(series.counts, dtype=float))
    dates = series.dates
    window = params.config.window_len

    if cfg.forecast_mode == MODE_TEACHER_FORCED:
        test_idx = [i for i, d in enumerate(dates) if d.year == cfg.test_year]
        if not test_idx:
            raise DataFormatError(f"no observed days in test year {cfg.test_year}")
        first = test_idx[0]
        if first < window:
            raise DataFormatError("not enough history before the test year")
        result = rolling_forecast(
            params,
            scaler,
            scaled[:first],
            horizon=len(test_idx),
            mode=MODE_TEACHER_FORCED,
            start_date=dates[first],
            observations=scaled[first:],
        )
    elif cfg.forecast_mode == MODE_AUTOREGRESSIVE:
        result = rolling_forecast(
            params,
            scaler,
            scaled,
            horizon=cfg.horizon,
            mode=MODE_AUTOREGRESSIVE,
            start_date=dates[-1] + dt.timedelta(days=1),
        )
    else:
        raise UsageError(f"forecast_mode must be teacher_forced or autoregressive, got {cfg.forecast_mode!r}")

    out = _out_dir(cfg) / "forecast.csv"
    result.to_csv(out, config_hash(cfg))
    print(f"wrote {out}: {len(result)} days, mode {result.mode}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "label": cmd_label,
    "tune": cmd_tune,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "forecast": cmd_forecast,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand; expected one of " + ", ".join(SUBCOMMANDS))
        cfg = _effective_config(args)
        if args.all:
            base_out = Path(cfg.out_dir)
            file_values = parse_config_file(args.config) if args.config else None
            for disease in ("dengue", "chikungunya", "zika"):
                sub_cfg = build_config(
                    file_values,
                    _flag_overrides(args, out_dir=str(base_out / disease), disease=disease),
                )
                code = COMMANDS[args.command](sub_cfg)
                if code != EXIT_OK:
                    return code
            return EXIT_OK
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"ERROR:{EXIT_USAGE}:{exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"ERROR:{EXIT_DATA}:{exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"ERROR:{EXIT_NUMERIC}:{exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # contract violations from bad config values
        print(f"ERROR:{EXIT_USAGE}:{exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
