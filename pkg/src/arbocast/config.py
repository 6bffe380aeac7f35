"""Run configuration: a flat key-value config file plus CLI overrides.

Config files hold one ``key = value`` pair per line; ``#`` starts a
comment.  Every documented key has a default, CLI flags override file
values, and the effective configuration is hashed so artifacts can declare
what produced them.
"""
from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import UsageError

ENV_SEED = "ARBOCAST_SEED"


@dataclass(frozen=True)
class RunConfig:
    # data selection
    disease: str = "dengue"
    municipality: str | None = None
    cases_csv: str | None = None  # defaults to <out_dir>/cases.csv
    population_csv: str | None = None  # defaults to <out_dir>/population.csv
    test_year: int = 2023
    percentile: float | None = None  # None = per-disease policy
    threshold_scope: str = "training"  # or "full"
    # model
    window_len: int = 60
    architecture: str = "simple"
    units: tuple[int, ...] | None = None  # None = 64 per layer
    dropout: float = 0.2
    # training
    val_fraction: float = 0.2
    epochs: int = 100
    batch_size: int = 32
    patience_stop: int = 10
    lr_init: float = 1e-3
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    lr_min: float = 1e-5
    cv_folds: int = 0  # 0 disables cross-validation during `train`
    # tuning
    units_min: int = 128
    units_max: int = 512
    n_trials: int = 30
    trial_epochs: int = 50
    # evaluation
    bootstrap_iters: int = 1000
    ci_level: float = 0.95
    # forecasting
    forecast_mode: str = "teacher_forced"
    horizon: int = 30  # autoregressive mode only; teacher-forced spans the test year
    # synthetic data
    synth_start_year: int = 2017
    synth_years: int = 7
    synth_base: float = 200.0
    synth_amplitude: float = 0.25
    synth_period: float = 365.0
    synth_dispersion: float = 0.002
    synth_outbreaks_per_year: int = 3
    synth_multiplier: float = 3.0
    population_base: int = 1_500_000
    population_growth: int = 8_000
    # run control
    seed: int = 0
    jobs: int = 1
    out_dir: str = "artifacts"

    def __post_init__(self):
        if self.disease not in ("dengue", "chikungunya", "zika"):
            raise UsageError(f"disease must be dengue, chikungunya, or zika, got {self.disease!r}")
        if self.architecture not in ("simple", "bidirectional"):
            raise UsageError(f"architecture must be simple or bidirectional, got {self.architecture!r}")
        if self.threshold_scope not in ("training", "full"):
            raise UsageError(f"threshold_scope must be training or full, got {self.threshold_scope!r}")

    def resolved_cases_csv(self) -> Path:
        return Path(self.cases_csv) if self.cases_csv else Path(self.out_dir) / "cases.csv"

    def resolved_population_csv(self) -> Path:
        return (
            Path(self.population_csv)
            if self.population_csv
            else Path(self.out_dir) / "population.csv"
        )


_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _coerce(name: str, text: str, target_type) -> object:
    text = text.strip()
    try:
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
        if target_type is bool:
            return _BOOL_VALUES[text.lower()]
        if target_type == tuple:
            return tuple(int(part) for part in text.split(",") if part.strip())
        return text
    except (ValueError, KeyError):
        raise UsageError(f"config key {name!r}: cannot parse value {text!r}") from None


def _field_types() -> dict[str, type]:
    types: dict[str, type] = {}
    for f in dataclasses.fields(RunConfig):
        t = f.type
        if t in ("int", "int | None"):
            types[f.name] = int
        elif t in ("float", "float | None"):
            types[f.name] = float
        elif t.startswith("tuple"):
            types[f.name] = tuple
        else:
            types[f.name] = str
    return types


FIELD_TYPES = _field_types()


def parse_config_file(path) -> dict[str, str]:
    """Read a flat ``key = value`` file; unknown keys are rejected later."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def build_config(
    file_values: dict[str, str] | None = None,
    overrides: dict[str, object] | None = None,
) -> RunConfig:
    """Merge defaults, config-file values, the ARBOCAST_SEED fallback, and
    CLI overrides (highest precedence)."""
    merged: dict[str, object] = {}

    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        merged["seed"] = _coerce("seed", env_seed, int)

    for key, text in (file_values or {}).items():
        if key not in FIELD_TYPES:
            raise UsageError(f"unknown config key {key!r}")
        merged[key] = _coerce(key, text, FIELD_TYPES[key])

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in FIELD_TYPES:
            raise UsageError(f"unknown config key {key!r}")
        merged[key] = value

    return RunConfig(**merged)


# excluded from the hash: fields that cannot change artifact content, so
# identical runs hash identically regardless of where they read and write
_UNHASHED_FIELDS = {"out_dir", "cases_csv", "population_csv", "jobs"}


def config_hash(cfg: RunConfig) -> str:
    """Short stable hash of the content-affecting configuration."""
    lines = []
    for f in sorted(dataclasses.fields(RunConfig), key=lambda f: f.name):
        if f.name in _UNHASHED_FIELDS:
            continue
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name}={value}")
    digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
    return digest[:12]
