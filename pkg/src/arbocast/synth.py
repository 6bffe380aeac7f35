"""Synthetic daily case series for tests and demos.

Daily counts follow a gamma-Poisson (negative-binomial-like) noise process
around a seasonal sinusoid, with multiplicative outbreak windows injected
at configurable positions.  Everything is deterministic under the seed.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .data import CaseSeries, Disease, PopulationTable
from .errors import DataFormatError

ONE_DAY = dt.timedelta(days=1)


@dataclass(frozen=True)
class OutbreakInjection:
    start: dt.date
    length_days: int
    multiplier: float

    def __post_init__(self):
        if self.length_days < 1:
            raise ValueError("injection length must be positive")
        if self.multiplier <= 0:
            raise ValueError("injection multiplier must be positive")

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=self.length_days - 1)


@dataclass(frozen=True)
class SynthSpec:
    start: dt.date
    end: dt.date
    base_rate: float = 200.0
    seasonal_amplitude: float = 0.25
    period_days: float = 365.0
    noise_dispersion: float = 0.002
    injections: tuple[OutbreakInjection, ...] = ()
    population_base: int = 1_500_000
    population_growth_per_year: int = 8_000
    seed: int = 0

    def __post_init__(self):
        if self.end < self.start:
            raise DataFormatError("spec end date precedes start date")
        if self.base_rate <= 0 or self.period_days <= 0:
            raise DataFormatError("base rate and period must be positive")
        if not 0.0 <= self.seasonal_amplitude < 1.0:
            raise DataFormatError("seasonal amplitude must lie in [0, 1)")
        if self.noise_dispersion < 0:
            raise DataFormatError("noise dispersion must be non-negative")
        if self.population_base <= 0:
            raise DataFormatError("population must be positive")
        for inj in self.injections:
            if inj.start < self.start or inj.end > self.end:
                raise DataFormatError(
                    f"injection {inj.start}..{inj.end} outside {self.start}..{self.end}"
                )


def default_synth_spec(
    seed: int = 0,
    start_year: int = 2017,
    n_years: int = 7,
    outbreaks_per_year: int = 3,
    multiplier: float = 3.0,
) -> SynthSpec:
    """The stock demo spec: 7 years of daily data, seasonal period 365,
    and three month-long outbreak windows injected per year."""
    start = dt.date(start_year, 1, 1)
    end = dt.date(start_year + n_years - 1, 12, 31)
    outbreak_months = (2, 6, 10)[:outbreaks_per_year]
    injections = []
    for year in range(start_year, start_year + n_years):
        for month in outbreak_months:
            first = dt.date(year, month, 1)
            if month == 12:
                nxt = dt.date(year + 1, 1, 1)
            else:
                nxt = dt.date(year, month + 1, 1)
            injections.append(
                OutbreakInjection(first, (nxt - first).days, multiplier)
            )
    return SynthSpec(start=start, end=end, injections=tuple(injections), seed=seed)


def synth_generate(
    spec: SynthSpec,
    disease: Disease | str = Disease.DENGUE,
    municipality: str = "synthetic",
) -> tuple[CaseSeries, PopulationTable]:
    """Draw a daily case series and a matching annual population table.

    The daily mean is base * (1 + amplitude * sin(2*pi*day/period)), scaled
    by the multiplier inside injected outbreak windows.  With dispersion
    d > 0, counts are Poisson draws around gamma-distributed rates with
    variance mean + d * mean^2; with d = 0 and amplitude 0 the series is
    exactly the rounded base rate.
    """
    if isinstance(disease, str):
        disease = Disease(disease)
    n_days = (spec.end - spec.start).days + 1
    dates = [spec.start + i * ONE_DAY for i in range(n_days)]

    day_idx = np.arange(n_days, dtype=float)
    means = spec.base_rate * (
        1.0 + spec.seasonal_amplitude * np.sin(2.0 * math.pi * day_idx / spec.period_days)
    )
    for inj in spec.injections:
        lo = (inj.start - spec.start).days
        hi = lo + inj.length_days
        means[lo:hi] *= inj.multiplier

    if spec.noise_dispersion > 0:
        rng = np.random.default_rng(spec.seed)
        shape = 1.0 / spec.noise_dispersion
        rates = rng.gamma(shape, means * spec.noise_dispersion)
        counts = rng.poisson(rates)
    else:
        counts = np.rint(means).astype(int)

    series = CaseSeries(
        disease=disease,
        municipality=municipality,
        dates=tuple(dates),
        counts=tuple(int(c) for c in counts),
    )

    years = tuple(range(spec.start.year, spec.end.year + 1))
    populations = tuple(
        spec.population_base + spec.population_growth_per_year * (y - spec.start.year)
        for y in years
    )
    return series, PopulationTable(years, populations)


def write_case_csv(path, series: CaseSeries, config_hash: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write("date,disease,municipality,count\n")
        for day, count in zip(series.dates, series.counts):
            fh.write(f"{day.isoformat()},{series.disease.value},{series.municipality},{count}\n")


def write_population_csv(path, table: PopulationTable, config_hash: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if config_hash:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write("year,population\n")
        for year, pop in zip(table.years, table.populations):
            fh.write(f"{year},{pop}\n")
