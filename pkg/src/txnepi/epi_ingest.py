"""Ingestion of external epidemiological and mobility reference data.

Daily OWID-style CSVs and mobility-report CSVs are parsed and bucketed onto
the weekly transaction grid (week-end dates every 7 days). All functions are
pure; nothing here mutates shared state.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import NotFoundError, ParameterError, RowParseError, SchemaError

# Transaction week grid: week-end dates, 7-day spacing.
DEFAULT_GRID_START = date(2019, 1, 1)
DEFAULT_GRID_END = date(2022, 12, 27)

# Cities inherit the weekly series of their country (OWID has no city
# resolution).
CITY_COUNTRY = {
    "Medellin": "Colombia",
    "Bogota DC": "Colombia",
    "Brasilia": "Brazil",
    "Santiago": "Chile",
}


def week_grid(start: date = DEFAULT_GRID_START, end: date = DEFAULT_GRID_END) -> list[date]:
    """Return the week-end dates from ``start`` to ``end`` in 7-day steps."""
    if start > end:
        raise ParameterError(f"grid start {start} after end {end}")
    span = (end - start).days
    if span % 7 != 0:
        raise ParameterError(f"grid span {span} days is not a multiple of 7")
    return [start + timedelta(days=7 * k) for k in range(span // 7 + 1)]


@dataclass(frozen=True)
class EpiDailyRecord:
    country: str
    date: date
    new_cases: float
    new_deaths: float


@dataclass
class EpiWeeklySeries:
    """Weekly sums of daily counts, aligned to the transaction week grid.

    ``deaths_normalized`` is the weekly death count divided by the series
    maximum (all-zero series stay all-zero); it drives the pandemic spending
    multiplier in the generator.
    """

    country: str
    week_end_dates: list[date]
    new_deaths: np.ndarray
    new_cases: np.ndarray
    deaths_normalized: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.new_deaths = np.asarray(self.new_deaths, dtype=float)
        self.new_cases = np.asarray(self.new_cases, dtype=float)
        n = len(self.week_end_dates)
        if len(self.new_deaths) != n or len(self.new_cases) != n:
            raise ParameterError("weekly series lengths do not match the date grid")
        for prev, cur in zip(self.week_end_dates, self.week_end_dates[1:]):
            if (cur - prev).days != 7:
                raise ParameterError("week_end_dates must ascend in 7-day steps")
        if self.deaths_normalized is None:
            peak = float(self.new_deaths.max()) if n else 0.0
            self.deaths_normalized = (
                self.new_deaths / peak if peak > 0 else np.zeros(n)
            )
        else:
            self.deaths_normalized = np.asarray(self.deaths_normalized, dtype=float)
            if len(self.deaths_normalized) != n:
                raise ParameterError("deaths_normalized length mismatch")


@dataclass
class MobilityReferenceSeries:
    """Weekly mean percent-change-from-baseline for one region and category."""

    region: str
    category: str
    week_end_dates: list[date]
    pct_change_from_baseline: np.ndarray

    def __post_init__(self):
        self.pct_change_from_baseline = np.asarray(
            self.pct_change_from_baseline, dtype=float
        )
        if len(self.pct_change_from_baseline) != len(self.week_end_dates):
            raise ParameterError("mobility series lengths do not match")


@dataclass(frozen=True)
class EpiColumns:
    location: str = "location"
    date: str = "date"
    new_cases: str = "new_cases"
    new_deaths: str = "new_deaths"


def _decode(raw) -> str:
    if isinstance(raw, bytes):
        return raw.decode("utf-8")
    return raw


def _parse_count(cell: str) -> float:
    # Blank cells are 0 by policy; negative source revisions clamp to 0.
    if cell is None or cell.strip() == "":
        return 0.0
    return max(0.0, float(cell))


def parse_epi_csv(
    raw,
    countries: list[str] | None = None,
    columns: EpiColumns = EpiColumns(),
) -> dict[str, list[EpiDailyRecord]]:
    """Parse an OWID-style daily CSV into records grouped by country.

    ``countries`` limits the output (rows for other countries are skipped);
    ``None`` keeps every country present.
    """
    reader = csv.DictReader(io.StringIO(_decode(raw)))
    header = reader.fieldnames or []
    for required in (columns.location, columns.date, columns.new_cases, columns.new_deaths):
        if required not in header:
            raise SchemaError(required)
    wanted = set(countries) if countries is not None else None
    out: dict[str, list[EpiDailyRecord]] = {}
    for line_no, row in enumerate(reader, start=2):
        country = row[columns.location]
        if wanted is not None and country not in wanted:
            continue
        try:
            day = date.fromisoformat(row[columns.date].strip())
        except (ValueError, AttributeError) as exc:
            raise RowParseError(line_no, f"unparseable date {row[columns.date]!r}") from exc
        try:
            cases = _parse_count(row[columns.new_cases])
            deaths = _parse_count(row[columns.new_deaths])
        except ValueError as exc:
            raise RowParseError(line_no, str(exc)) from exc
        out.setdefault(country, []).append(
            EpiDailyRecord(country=country, date=day, new_cases=cases, new_deaths=deaths)
        )
    return out


def weekly_aggregate(
    daily: list[EpiDailyRecord],
    grid_start: date = DEFAULT_GRID_START,
    grid_end: date = DEFAULT_GRID_END,
) -> EpiWeeklySeries:
    """Sum daily records into the 7-day buckets ending on each grid date.

    Bucket for grid date d covers [d-6, d] inclusive. Days outside every
    bucket are dropped; weeks with no data sum to 0.
    """
    grid = week_grid(grid_start, grid_end)
    country = daily[0].country if daily else ""
    deaths = np.zeros(len(grid))
    cases = np.zeros(len(grid))
    for rec in daily:
        if rec.country != country:
            raise ParameterError(
                f"mixed countries in weekly_aggregate: {country!r} vs {rec.country!r}"
            )
        offset = (rec.date - grid_start).days + 6
        if offset < 0:
            continue
        idx = offset // 7
        if idx >= len(grid):
            continue
        deaths[idx] += rec.new_deaths
        cases[idx] += rec.new_cases
    return EpiWeeklySeries(
        country=country, week_end_dates=grid, new_deaths=deaths, new_cases=cases
    )


def weekly_by_country(
    daily_by_country: dict[str, list[EpiDailyRecord]],
    grid_start: date = DEFAULT_GRID_START,
    grid_end: date = DEFAULT_GRID_END,
) -> dict[str, EpiWeeklySeries]:
    return {
        country: weekly_aggregate(records, grid_start, grid_end)
        for country, records in daily_by_country.items()
    }


@dataclass(frozen=True)
class MobilityColumns:
    region: str = "region"
    date: str = "date"


def parse_mobility_csv(
    raw,
    region: str,
    columns: MobilityColumns = MobilityColumns(),
    categories: list[str] | None = None,
    grid_start: date = DEFAULT_GRID_START,
    grid_end: date = DEFAULT_GRID_END,
) -> dict[str, MobilityReferenceSeries]:
    """Parse a mobility-report CSV into weekly series for one region.

    Every column other than region/date is treated as a percent-change
    category unless ``categories`` narrows the set. Daily values are averaged
    into the week grid; weeks with no observed day are omitted.
    """
    reader = csv.DictReader(io.StringIO(_decode(raw)))
    header = reader.fieldnames or []
    for required in (columns.region, columns.date):
        if required not in header:
            raise SchemaError(required)
    cat_cols = [c for c in header if c not in (columns.region, columns.date)]
    if categories is not None:
        missing = [c for c in categories if c not in cat_cols]
        if missing:
            raise SchemaError(missing[0])
        cat_cols = list(categories)

    grid = week_grid(grid_start, grid_end)
    sums = {c: np.zeros(len(grid)) for c in cat_cols}
    counts = {c: np.zeros(len(grid), dtype=int) for c in cat_cols}
    seen_regions: set[str] = set()
    matched = False
    for line_no, row in enumerate(reader, start=2):
        seen_regions.add(row[columns.region])
        if row[columns.region] != region:
            continue
        matched = True
        try:
            day = date.fromisoformat(row[columns.date].strip())
        except (ValueError, AttributeError) as exc:
            raise RowParseError(line_no, f"unparseable date {row[columns.date]!r}") from exc
        offset = (day - grid_start).days + 6
        if offset < 0 or offset // 7 >= len(grid):
            continue
        idx = offset // 7
        for c in cat_cols:
            cell = row[c]
            if cell is None or cell.strip() == "":
                continue
            sums[c][idx] += float(cell)
            counts[c][idx] += 1
    if not matched:
        raise NotFoundError(region, sorted(seen_regions))

    out = {}
    for c in cat_cols:
        have = counts[c] > 0
        out[c] = MobilityReferenceSeries(
            region=region,
            category=c,
            week_end_dates=[d for d, keep in zip(grid, have) if keep],
            pct_change_from_baseline=sums[c][have] / counts[c][have],
        )
    return out
