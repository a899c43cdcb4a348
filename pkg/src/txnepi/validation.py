"""Dataset diagnostics: correlation/lag analysis and conformance checks.

The lag convention is fixed: positive lag shifts the transaction series
later, i.e. r_l correlates this week's epidemiological metric with the
transaction volume l weeks afterwards. Behavioural responses trail the
death signal, so well-calibrated categories peak at small positive lags.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .datagen import GenerationConfig, city_shares
from .dp_analytics import MobilitySeries, city_labels
from .epi_ingest import CITY_COUNTRY, EpiWeeklySeries, MobilityReferenceSeries
from .errors import ParameterError, UndefinedCorrelationError


def pearson(x, y) -> float:
    """Sample Pearson correlation; undefined for constant series."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ParameterError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ParameterError("need at least 2 points")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = np.sqrt(np.sum(xd * xd))
    sy = np.sqrt(np.sum(yd * yd))
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation undefined for constant series")
    return float(np.dot(xd, yd) / (sx * sy))


@dataclass
class CcfResult:
    lags: np.ndarray
    correlations: np.ndarray  # NaN where a shifted window is constant
    lag_max: int
    ccf_max: float


def ccf(epi, txn, max_lag: int) -> CcfResult:
    """Cross-correlations of the epi series with the lag-shifted transaction series.

    r_l = pearson(epi_t, txn_{t+l}) over the overlapping range, l = 0..max_lag.
    lag_max is the lag of maximal |r_l|; ties break toward the smaller lag.
    """
    epi = np.asarray(epi, dtype=float)
    txn = np.asarray(txn, dtype=float)
    if len(epi) != len(txn):
        raise ParameterError(f"length mismatch: {len(epi)} vs {len(txn)}")
    if max_lag < 0 or len(epi) <= max_lag + 2:
        raise ParameterError(
            f"series of length {len(epi)} too short for max_lag {max_lag}"
        )
    lags = np.arange(max_lag + 1)
    corrs = np.full(max_lag + 1, np.nan)
    for lag in lags:
        a = epi[: len(epi) - lag] if lag else epi
        b = txn[lag:]
        try:
            corrs[lag] = pearson(a, b)
        except UndefinedCorrelationError:
            continue
    if np.all(np.isnan(corrs)):
        raise UndefinedCorrelationError("every lag window is constant")
    # ties (within float noise) break toward the smaller lag
    abs_corrs = np.abs(corrs)
    best = int(np.nonzero(abs_corrs >= np.nanmax(abs_corrs) - 1e-12)[0][0])
    return CcfResult(lags=lags, correlations=corrs, lag_max=best, ccf_max=float(corrs[best]))


def city_category_series(table: pd.DataFrame) -> dict[tuple[str, str], np.ndarray]:
    """Weekly transaction-count sums per (city, category) on the table's grid."""
    dates = sorted(table["date"].unique())
    index = {d: i for i, d in enumerate(dates)}
    cities = city_labels(table)
    out: dict[tuple[str, str], np.ndarray] = {}
    grouped = table.groupby([cities, table["merch_category"], table["date"]])[
        "nb_transactions"
    ].sum()
    for (city, category, day), value in grouped.items():
        key = (city, category)
        if key not in out:
            out[key] = np.zeros(len(dates))
        out[key][index[day]] = value
    return out


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: str
    expected: str


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, measured, expected) -> None:
        if any(c.name == name for c in self.checks):
            raise ParameterError(f"duplicate check name {name!r}")
        self.checks.append(CheckResult(name, bool(passed), str(measured), str(expected)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "check": [c.name for c in self.checks],
                "status": ["pass" if c.passed else "FAIL" for c in self.checks],
                "measured": [c.measured for c in self.checks],
                "expected": [c.expected for c in self.checks],
            }
        )

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name}: measured {c.measured}, expected {c.expected}")
        verdict = "ALL CHECKS PASSED" if self.passed else "SOME CHECKS FAILED"
        return "\n".join(lines + [verdict])


# Acceptance bands for the generated dataset.
SHARE_TOLERANCE_PP = 1.5
LAG_BAND = (0, 3)
MIN_LAG_CITIES = 3
UTILITIES_CCF_BOUND = 0.3
EXPECTED_WEEKS = 209


def validate_dataset(
    table: pd.DataFrame,
    epi: dict[str, EpiWeeklySeries],
    config: GenerationConfig | None = None,
    max_lag: int = 10,
    lag_check_exclude: list[str] | None = None,
) -> ValidationReport:
    """Run the conformance checks against a generated transaction table.

    Checks: non-negative counts; population-proportional merchant shares;
    per-category lag/sign consistency of the death-transaction CCF; flat
    response for zero-multiplier categories; full 209-week grid.
    ``lag_check_exclude`` drops named cities from the lag-band check (an
    escape hatch for deliberately decoupled city configs).
    """
    config = config or GenerationConfig()
    exclude = set(lag_check_exclude or [])
    report = ValidationReport()

    negatives = int((table["nb_transactions"] < 0).sum())
    report.add("non_negative_counts", negatives == 0, f"{negatives} negative rows", "0")

    merchants = table.drop_duplicates("merchant_id")
    merchant_city = city_labels(merchants)
    total = len(merchants)
    expected_shares = city_shares(config.populations)
    for city in sorted(expected_shares):
        measured = float((merchant_city == city).sum()) / total * 100.0
        dev = abs(measured - expected_shares[city])
        report.add(
            f"city_share[{city}]",
            dev <= SHARE_TOLERANCE_PP,
            f"{measured:.4f}%",
            f"{expected_shares[city]:.4f}% +/- {SHARE_TOLERANCE_PP}pp",
        )

    n_dates = table["date"].nunique()
    report.add("distinct_dates", n_dates == EXPECTED_WEEKS, n_dates, EXPECTED_WEEKS)

    series = city_category_series(table)
    cities = sorted({c for c, _ in series})
    results: dict[tuple[str, str], CcfResult] = {}
    for (city, category), txn in series.items():
        country = CITY_COUNTRY.get(city)
        if country is None or country not in epi:
            continue
        deaths = epi[country].new_deaths
        if len(deaths) != len(txn):
            raise ParameterError(
                f"epi series for {country} has {len(deaths)} weeks, table has {len(txn)}"
            )
        try:
            results[(city, category)] = ccf(deaths, txn, max_lag)
        except UndefinedCorrelationError:
            continue

    for profile in config.categories:
        per_city = {
            city: results[(city, profile.name)]
            for city in cities
            if (city, profile.name) in results
        }
        if not per_city:
            continue
        if profile.covid_multiplier == 0:
            worst = max(abs(r.ccf_max) for r in per_city.values())
            report.add(
                f"ccf_flat[{profile.name}]",
                worst < UTILITIES_CCF_BOUND,
                f"max |ccf|={worst:.3f}",
                f"< {UTILITIES_CCF_BOUND}",
            )
            continue
        lag_cities = {
            city: r for city, r in per_city.items() if city not in exclude
        }
        lag_ok = sum(
            1 for r in lag_cities.values() if LAG_BAND[0] <= r.lag_max <= LAG_BAND[1]
        )
        lag_needed = min(MIN_LAG_CITIES, len(lag_cities))
        report.add(
            f"ccf_lag[{profile.name}]",
            lag_ok >= lag_needed,
            f"{lag_ok}/{len(lag_cities)} cities with lag in {list(LAG_BAND)}",
            f">= {lag_needed}",
        )
        sign_ok = sum(
            1
            for r in per_city.values()
            if np.sign(r.ccf_max) == np.sign(profile.covid_multiplier)
        )
        report.add(
            f"ccf_sign[{profile.name}]",
            sign_ok == len(per_city),
            f"{sign_ok}/{len(per_city)} cities matching sign({profile.covid_multiplier:+g})",
            f"{len(per_city)}/{len(per_city)}",
        )
    return report


@dataclass
class MobilityComparison:
    correlation: float
    n_weeks: int


def compare_mobility(
    dp_series: MobilitySeries, reference: MobilityReferenceSeries
) -> MobilityComparison:
    """Pearson correlation of percent-change columns over the date intersection."""
    dp_by_date = {
        d: v
        for d, v in zip(dp_series.week_end_dates, dp_series.pct_change_from_baseline)
        if np.isfinite(v)
    }
    common = [
        (dp_by_date[d], v)
        for d, v in zip(reference.week_end_dates, reference.pct_change_from_baseline)
        if d in dp_by_date and np.isfinite(v)
    ]
    if len(common) < 8:
        raise ParameterError(
            f"date intersection has {len(common)} weeks; need at least 8"
        )
    dp_vals, ref_vals = zip(*common)
    return MobilityComparison(correlation=pearson(dp_vals, ref_vals), n_weeks=len(common))
