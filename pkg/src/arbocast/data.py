"""Case and population ingestion, monthly incidence, and outbreak labels.

Daily confirmed-case tables come in as CSV, are gap-filled to one entry per
day, and are aggregated into monthly incidence per 100,000 inhabitants.
Months whose incidence strictly exceeds a disease-specific percentile
threshold are labeled as outbreak months.
"""
from __future__ import annotations

import bisect
import datetime as dt
import enum
from dataclasses import dataclass
from typing import Iterable, TextIO

from .errors import DataFormatError

ONE_DAY = dt.timedelta(days=1)
PER_100K = 100_000.0

CASE_HEADER = ("date", "disease", "municipality", "count")
POPULATION_HEADER = ("year", "population")


class Disease(str, enum.Enum):
    DENGUE = "dengue"
    CHIKUNGUNYA = "chikungunya"
    ZIKA = "zika"


# Dengue runs at a higher baseline incidence, so it gets a stricter cutoff;
# the lower cutoff for the other two trades precision for sensitivity.
DISEASE_PERCENTILE = {
    Disease.DENGUE: 0.75,
    Disease.CHIKUNGUNYA: 0.70,
    Disease.ZIKA: 0.70,
}


@dataclass(frozen=True)
class CaseSeries:
    """Gap-free daily case counts for one disease in one municipality."""

    disease: Disease
    municipality: str
    dates: tuple[dt.date, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.dates) != len(self.counts):
            raise ValueError("dates and counts must have equal length")
        if not self.dates:
            raise DataFormatError("case series is empty")
        for a, b in zip(self.dates, self.dates[1:]):
            if b - a != ONE_DAY:
                raise ValueError(f"dates must be consecutive days, gap at {a} -> {b}")
        if any(c < 0 for c in self.counts):
            raise ValueError("case counts must be non-negative")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class PopulationTable:
    """Annual population estimates, one row per year."""

    years: tuple[int, ...]
    populations: tuple[int, ...]

    def __post_init__(self):
        if len(self.years) != len(self.populations):
            raise ValueError("years and populations must have equal length")
        if not self.years:
            raise DataFormatError("population table is empty")
        if any(b <= a for a, b in zip(self.years, self.years[1:])):
            raise ValueError("years must be strictly increasing")
        if any(p <= 0 for p in self.populations):
            raise ValueError("population must be positive")


@dataclass(frozen=True)
class IncidenceSeries:
    """Monthly cases per 100,000 inhabitants; months are first-of-month dates."""

    disease: Disease
    months: tuple[dt.date, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.months) != len(self.values):
            raise ValueError("months and values must have equal length")
        for a, b in zip(self.months, self.months[1:]):
            if _next_month(a) != b:
                raise ValueError(f"months must be consecutive, gap at {a} -> {b}")
        if any(v < 0 for v in self.values):
            raise ValueError("incidence must be non-negative")

    def __len__(self) -> int:
        return len(self.months)


@dataclass(frozen=True)
class OutbreakLabels:
    """Binary outbreak flag per month: 1 iff incidence strictly exceeds the threshold."""

    threshold: float
    percentile: float
    months: tuple[dt.date, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if not 0.0 < self.percentile < 1.0:
            raise ValueError("percentile must lie in (0, 1)")
        if len(self.months) != len(self.labels):
            raise ValueError("months and labels must have equal length")
        if any(lab not in (0, 1) for lab in self.labels):
            raise ValueError("labels must be 0 or 1")

    def label_for(self, day: dt.date) -> int:
        """Outbreak label of the month containing ``day``."""
        month = day.replace(day=1)
        try:
            idx = self.months.index(month)
        except ValueError:
            raise DataFormatError(f"no outbreak label for month {month:%Y-%m}") from None
        return self.labels[idx]


def _next_month(month: dt.date) -> dt.date:
    if month.month == 12:
        return dt.date(month.year + 1, 1, 1)
    return dt.date(month.year, month.month + 1, 1)


def _split_csv_line(line: str) -> list[str]:
    return [field.strip() for field in line.split(",")]


def _data_lines(stream: Iterable[str]):
    """Yield (line_number, fields) for non-blank, non-comment lines."""
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, _split_csv_line(line)


def parse_case_csv(
    stream: TextIO | Iterable[str],
    disease: Disease | str | None = None,
    municipality: str | None = None,
    stats_out: dict | None = None,
) -> CaseSeries:
    """Read ``date,disease,municipality,count`` rows into a gap-free CaseSeries.

    Rows are filtered to a single (disease, municipality) pair; when either
    selector is None the file must contain exactly one candidate value.
    Duplicate dates are summed and missing days between the first and last
    date are inserted with count 0.  Lines starting with ``#`` are ignored.

    Raises DataFormatError naming the line number for malformed rows,
    negative counts, or an empty file.
    """
    if isinstance(disease, str):
        try:
            disease = Disease(disease)
        except ValueError:
            raise DataFormatError(f"unknown disease {disease!r}") from None

    rows = _data_lines(stream)
    try:
        header_lineno, header = next(rows)
    except StopIteration:
        raise DataFormatError("empty case file") from None
    if tuple(f.lower() for f in header) != CASE_HEADER:
        raise DataFormatError(
            f"line {header_lineno}: expected header {','.join(CASE_HEADER)!r}"
        )

    by_date: dict[dt.date, int] = {}
    seen_diseases: set[str] = set()
    seen_municipalities: set[str] = set()
    rows_read = 0
    rows_matched = 0
    duplicates = 0
    for lineno, fields in rows:
        if len(fields) != 4:
            raise DataFormatError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        date_s, disease_s, muni_s, count_s = fields
        rows_read += 1
        seen_diseases.add(disease_s)
        seen_municipalities.add(muni_s)
        if disease is not None and disease_s != disease.value:
            continue
        if municipality is not None and muni_s != municipality:
            continue
        try:
            date = dt.date.fromisoformat(date_s)
        except ValueError:
            raise DataFormatError(f"line {lineno}: invalid date {date_s!r}") from None
        try:
            count = int(count_s)
        except ValueError:
            raise DataFormatError(f"line {lineno}: invalid count {count_s!r}") from None
        if count < 0:
            raise DataFormatError(f"line {lineno}: negative count {count}")
        if date in by_date:
            duplicates += 1
        by_date[date] = by_date.get(date, 0) + count
        rows_matched += 1

    if disease is None:
        if len(seen_diseases) != 1:
            raise DataFormatError(
                f"file contains diseases {sorted(seen_diseases)}; pass an explicit selector"
            )
        try:
            disease = Disease(next(iter(seen_diseases)))
        except ValueError:
            raise DataFormatError(f"unknown disease {next(iter(seen_diseases))!r}") from None
    if municipality is None:
        matching = seen_municipalities if len(seen_municipalities) == 1 else None
        if matching is None:
            raise DataFormatError(
                f"file contains municipalities {sorted(seen_municipalities)}; "
                "pass an explicit selector"
            )
        municipality = next(iter(seen_municipalities))

    if not by_date:
        raise DataFormatError(
            f"no case rows for disease={disease.value!r}, municipality={municipality!r}"
        )

    first, last = min(by_date), max(by_date)
    dates: list[dt.date] = []
    counts: list[int] = []
    day = first
    zero_filled = 0
    while day <= last:
        dates.append(day)
        count = by_date.get(day)
        if count is None:
            count = 0
            zero_filled += 1
        counts.append(count)
        day += ONE_DAY

    if stats_out is not None:
        stats_out.update(
            rows_read=rows_read,
            rows_matched=rows_matched,
            duplicates_merged=duplicates,
            zero_filled_days=zero_filled,
        )
    return CaseSeries(disease, municipality, tuple(dates), tuple(counts))


def parse_population_csv(stream: TextIO | Iterable[str]) -> PopulationTable:
    """Read ``year,population`` rows into a PopulationTable (sorted by year)."""
    rows = _data_lines(stream)
    try:
        header_lineno, header = next(rows)
    except StopIteration:
        raise DataFormatError("empty population file") from None
    if tuple(f.lower() for f in header) != POPULATION_HEADER:
        raise DataFormatError(
            f"line {header_lineno}: expected header {','.join(POPULATION_HEADER)!r}"
        )

    by_year: dict[int, int] = {}
    for lineno, fields in rows:
        if len(fields) != 2:
            raise DataFormatError(f"line {lineno}: expected 2 fields, got {len(fields)}")
        try:
            year = int(fields[0])
            population = int(fields[1])
        except ValueError:
            raise DataFormatError(f"line {lineno}: invalid row {fields!r}") from None
        if population <= 0:
            raise DataFormatError(f"line {lineno}: population must be positive")
        if year in by_year:
            raise DataFormatError(f"line {lineno}: duplicate year {year}")
        by_year[year] = population

    if not by_year:
        raise DataFormatError("population file has no data rows")
    years = tuple(sorted(by_year))
    return PopulationTable(years, tuple(by_year[y] for y in years))


def interpolate_population(table: PopulationTable, month: dt.date) -> float:
    """Population estimate for a month, linearly interpolated between years.

    Annual estimates are anchored at January: month m of year y maps to
    P_y + ((m-1)/12) * (P_{y+1} - P_y).  Tabulation gaps interpolate between
    the nearest surrounding years.  Months in the final tabulated year return
    that year's estimate unchanged (no extrapolation).
    """
    year, m = month.year, month.month
    if year < table.years[0] or year > table.years[-1]:
        raise DataFormatError(
            f"month {month:%Y-%m} outside population table range "
            f"{table.years[0]}..{table.years[-1]}"
        )
    if year == table.years[-1]:
        return float(table.populations[-1])
    idx = bisect.bisect_right(table.years, year) - 1
    y0, p0 = table.years[idx], table.populations[idx]
    y1, p1 = table.years[idx + 1], table.populations[idx + 1]
    months_spanned = 12 * (y1 - y0)
    offset = 12 * (year - y0) + (m - 1)
    return p0 + (offset / months_spanned) * (p1 - p0)


def monthly_incidence(cases: CaseSeries, population: PopulationTable) -> IncidenceSeries:
    """Monthly incidence per 100,000 inhabitants from daily counts."""
    totals: dict[dt.date, int] = {}
    for day, count in zip(cases.dates, cases.counts):
        month = day.replace(day=1)
        totals[month] = totals.get(month, 0) + count

    months = sorted(totals)
    values = [
        totals[month] / interpolate_population(population, month) * PER_100K
        for month in months
    ]
    return IncidenceSeries(cases.disease, tuple(months), tuple(values))


def outbreak_threshold(series: IncidenceSeries, percentile: float) -> float:
    """Empirical percentile of the monthly incidence values.

    Uses linear interpolation between order statistics: the percentile sits
    at zero-based rank p*(n-1) of the sorted values.
    """
    if not 0.0 < percentile < 1.0:
        raise ValueError("percentile must lie in (0, 1)")
    if len(series) == 0:
        raise DataFormatError("cannot compute a threshold on an empty series")
    ordered = sorted(series.values)
    rank = percentile * (len(ordered) - 1)
    lo = int(rank)
    frac = rank - lo
    if frac == 0.0:
        return ordered[lo]
    return ordered[lo] + frac * (ordered[lo + 1] - ordered[lo])


def label_outbreaks(
    series: IncidenceSeries, threshold: float, percentile: float
) -> OutbreakLabels:
    """Flag each month: 1 iff incidence strictly exceeds the threshold.

    Equality with the threshold is a non-outbreak (the cutoff must be
    exceeded, not met).
    """
    labels = tuple(1 if v > threshold else 0 for v in series.values)
    return OutbreakLabels(threshold, percentile, series.months, labels)
