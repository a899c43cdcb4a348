"""Differentially private aggregate analyses over the transaction table.

Three releases: per-postal offline hotspot counts, weekly mobility series by
super-category with percent change from a pre-pandemic baseline, and weekly
essential-vs-luxury adherence series. Per-row counts are clipped to the upper
bound before aggregation so the per-merchant sensitivity claim holds; noisy
counts are rounded and clamped at zero before release.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd

from .datagen import OFFLINE
from .dp_core import (
    DEFAULT_DELTA,
    DEFAULT_SENSITIVITY,
    MODE_ANALYTIC,
    MODE_LINEAR,
    BudgetLedger,
    ReleaseMetadata,
    postprocess_counts,
    release_scale,
)
from .epi_ingest import DEFAULT_GRID_START, week_grid
from .errors import ParameterError

# 99th-percentile-style cap on a merchant's weekly transaction count under the
# public schema; rows are clipped here before any DP aggregation.
DEFAULT_UPPER_BOUND = 500.0

SUPER_CATEGORIES = {
    "retail_and_recreation": [
        "General Retail Stores",
        "Bars/Discotheques",
        "Restaurants",
        "Hotels/Motels",
    ],
    "grocery_and_pharmacy": [
        "Grocery Stores/Supermarkets",
        "Drug Stores/Pharmacies",
    ],
    "transit_stations": ["Airlines"],
}

ESSENTIAL_CATEGORIES = [
    "Utilities: Electric, Gas, Water",
    "Drug Stores/Pharmacies",
    "Grocery Stores/Supermarkets",
    "Hospitals",
    "General Retail Stores",
]
LUXURY_CATEGORIES = ["Hotels/Motels", "Bars/Discotheques", "Restaurants"]

# Percent change is measured against the first weeks of 2020 (pre-pandemic).
BASELINE_START = date(2020, 1, 1)
BASELINE_WEEKS = 5


def city_of_postal(code: str) -> str:
    """Map a postal code to its city; Santiago is the declared default."""
    if not code:
        raise ParameterError("empty postal code")
    if code.startswith("05"):
        return "Medellin"
    if code.startswith("11"):
        return "Bogota DC"
    if code.endswith("-000"):
        return "Brasilia"
    return "Santiago"


@dataclass(frozen=True)
class AnalysisWindow:
    """Inclusive [start, end] date range on the week grid, plus a city."""

    city: str
    start: date
    end: date

    def __post_init__(self):
        if self.start > self.end:
            raise ParameterError(f"window start {self.start} after end {self.end}")
        for d in (self.start, self.end):
            if (d - DEFAULT_GRID_START).days % 7 != 0:
                raise ParameterError(f"{d} is not on the week grid")

    def dates(self) -> list[date]:
        return week_grid(self.start, self.end)


def city_labels(table: pd.DataFrame) -> pd.Series:
    """City of every row, derived from its postal code."""
    return table["merch_postal_code"].map(city_of_postal)


def _window_frame(table: pd.DataFrame, window: AnalysisWindow) -> pd.DataFrame:
    sel = (
        (city_labels(table) == window.city)
        & (table["date"] >= window.start.isoformat())
        & (table["date"] <= window.end.isoformat())
    )
    return table.loc[sel]


def _ledger_for(ledger: BudgetLedger | None, epsilon: float) -> BudgetLedger:
    # Without a caller-supplied ledger, account against a fresh budget that
    # exactly covers this release.
    return ledger if ledger is not None else BudgetLedger(epsilon)


@dataclass
class HotspotMap:
    city: str
    start: date
    end: date
    counts: dict[str, int]
    metadata: ReleaseMetadata
    # unrounded noisy sums, kept for internal validation only (never released)
    raw_counts: dict[str, float] = None  # type: ignore[assignment]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"postal_code": list(self.counts), "noisy_count": list(self.counts.values())}
        )


def hotspot(
    table: pd.DataFrame,
    window: AnalysisWindow,
    epsilon: float,
    rng: np.random.Generator,
    ledger: BudgetLedger | None = None,
    upper_bound: float = DEFAULT_UPPER_BOUND,
    sensitivity: float = DEFAULT_SENSITIVITY,
    mode: str = MODE_LINEAR,
    delta: float = DEFAULT_DELTA,
) -> HotspotMap:
    """Noisy offline-transaction counts per postal code of the window's city.

    The whole window is one release (T = 1): offline rows in the window are
    clipped, summed per postal code, and noised at scale S*U/epsilon.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    frame = _window_frame(table, window)
    frame = frame.loc[frame["transaction_type"] == OFFLINE]
    sigma = release_scale(sensitivity, 1, upper_bound, epsilon, mode, delta)
    ledger = _ledger_for(ledger, epsilon)
    ledger.charge(f"hotspot:{window.city}", epsilon)
    meta = ReleaseMetadata(
        epsilon=epsilon,
        sigma=sigma,
        mode=mode,
        sensitivity=sensitivity,
        delta=delta if mode == MODE_ANALYTIC else None,
        charges=[(f"hotspot:{window.city}", epsilon)],
    )
    if frame.empty:
        return HotspotMap(window.city, window.start, window.end, {}, meta, {})

    clipped = np.minimum(frame["nb_transactions"].to_numpy(), upper_bound)
    sums = pd.Series(clipped, index=frame.index).groupby(frame["merch_postal_code"]).sum()
    sums = sums.sort_index()
    raw = sums.to_numpy(dtype=float) + rng.normal(0.0, sigma, len(sums))
    noisy = postprocess_counts(raw)
    counts = {postal: int(v) for postal, v in zip(sums.index, noisy)}
    raw_counts = {postal: float(v) for postal, v in zip(sums.index, raw)}
    return HotspotMap(window.city, window.start, window.end, counts, meta, raw_counts)


def _weekly_sums(
    frame: pd.DataFrame, dates: list[date], upper_bound: float
) -> np.ndarray:
    """Clipped per-week count sums aligned to the window's dates (0 where empty)."""
    out = np.zeros(len(dates))
    if frame.empty:
        return out
    clipped = np.minimum(frame["nb_transactions"].to_numpy(), upper_bound)
    sums = pd.Series(clipped, index=frame.index).groupby(frame["date"]).sum()
    index = {d.isoformat(): i for i, d in enumerate(dates)}
    for day_iso, value in sums.items():
        out[index[day_iso]] = value
    return out


def _baseline(noisy: np.ndarray, dates: list[date]) -> float:
    """Median of the first BASELINE_WEEKS noisy values on/after BASELINE_START.

    Windows that end before 2020 fall back to their own first weeks.
    """
    eligible = [i for i, d in enumerate(dates) if d >= BASELINE_START]
    if not eligible:
        eligible = list(range(len(dates)))
    take = eligible[:BASELINE_WEEKS]
    return float(np.median(noisy[take]))


@dataclass
class MobilitySeries:
    city: str
    super_category: str
    week_end_dates: list[date]
    noisy_counts: np.ndarray
    pct_change_from_baseline: np.ndarray
    metadata: ReleaseMetadata
    raw_counts: np.ndarray = None  # unrounded, internal validation only

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "date": [d.isoformat() for d in self.week_end_dates],
                "noisy_count": self.noisy_counts,
                "pct_change_from_baseline": self.pct_change_from_baseline,
            }
        )


def mobility(
    table: pd.DataFrame,
    window: AnalysisWindow,
    super_category: str,
    epsilon_total: float,
    rng: np.random.Generator,
    ledger: BudgetLedger | None = None,
    upper_bound: float = DEFAULT_UPPER_BOUND,
    sensitivity: float = DEFAULT_SENSITIVITY,
    mode: str = MODE_LINEAR,
    delta: float = DEFAULT_DELTA,
) -> MobilitySeries:
    """Weekly noisy city-wide counts for one mobility super-category.

    The release spans T = window steps; the budget is allocated per step
    (epsilon_total / T each) and the scale follows the T-step formula.
    Percent change is taken against the median of the first pre-pandemic
    baseline weeks of the noisy series; a zero baseline yields NaN markers.
    """
    if epsilon_total <= 0:
        raise ParameterError(f"epsilon_total must be > 0, got {epsilon_total}")
    if super_category not in SUPER_CATEGORIES:
        raise ParameterError(
            f"unknown super-category {super_category!r}; "
            f"expected one of {sorted(SUPER_CATEGORIES)}"
        )
    dates = window.dates()
    t_steps = len(dates)
    frame = _window_frame(table, window)
    frame = frame.loc[frame["merch_category"].isin(SUPER_CATEGORIES[super_category])]

    sigma = release_scale(sensitivity, t_steps, upper_bound, epsilon_total, mode, delta)
    per_step = epsilon_total / t_steps
    ledger = _ledger_for(ledger, epsilon_total)
    charges = []
    for d in dates:
        label = f"mobility:{super_category}:{d.isoformat()}"
        ledger.charge(label, per_step)
        charges.append((label, per_step))

    exact = _weekly_sums(frame, dates, upper_bound)
    raw = exact + rng.normal(0.0, sigma, t_steps)
    noisy = postprocess_counts(raw)
    baseline = _baseline(noisy.astype(float), dates)
    if baseline > 0:
        pct = (noisy - baseline) / baseline * 100.0
    else:
        pct = np.full(t_steps, np.nan)
    meta = ReleaseMetadata(
        epsilon=epsilon_total,
        sigma=sigma,
        mode=mode,
        sensitivity=sensitivity,
        delta=delta if mode == MODE_ANALYTIC else None,
        charges=charges,
    )
    return MobilitySeries(window.city, super_category, dates, noisy, pct, meta, raw)


@dataclass
class AdherenceSeries:
    city: str
    week_end_dates: list[date]
    essential: np.ndarray
    luxury: np.ndarray
    ratio: np.ndarray
    metadata: ReleaseMetadata
    raw_essential: np.ndarray = None  # unrounded, internal validation only
    raw_luxury: np.ndarray = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "date": [d.isoformat() for d in self.week_end_dates],
                "essential": self.essential,
                "luxury": self.luxury,
                "ratio": self.ratio,
            }
        )


def adherence(
    table: pd.DataFrame,
    window: AnalysisWindow,
    epsilon: float,
    rng: np.random.Generator,
    ledger: BudgetLedger | None = None,
    upper_bound: float = DEFAULT_UPPER_BOUND,
    sensitivity: float = DEFAULT_SENSITIVITY,
    mode: str = MODE_LINEAR,
    delta: float = DEFAULT_DELTA,
) -> AdherenceSeries:
    """Weekly noisy essential and luxury counts (online and offline rows).

    Essential and luxury category sets are disjoint, so the pair of series
    is released under one epsilon charge (parallel composition across the
    category partition); the two series use independent noise draws.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    dates = window.dates()
    t_steps = len(dates)
    frame = _window_frame(table, window)
    sigma = release_scale(sensitivity, t_steps, upper_bound, epsilon, mode, delta)
    ledger = _ledger_for(ledger, epsilon)
    label = f"adherence:{window.city}"
    ledger.charge(label, epsilon)

    essential_exact = _weekly_sums(
        frame.loc[frame["merch_category"].isin(ESSENTIAL_CATEGORIES)], dates, upper_bound
    )
    luxury_exact = _weekly_sums(
        frame.loc[frame["merch_category"].isin(LUXURY_CATEGORIES)], dates, upper_bound
    )
    raw_essential = essential_exact + rng.normal(0.0, sigma, t_steps)
    raw_luxury = luxury_exact + rng.normal(0.0, sigma, t_steps)
    essential = postprocess_counts(raw_essential)
    luxury = postprocess_counts(raw_luxury)
    ratio = np.where(luxury > 0, essential / np.where(luxury > 0, luxury, 1), np.nan)
    meta = ReleaseMetadata(
        epsilon=epsilon,
        sigma=sigma,
        mode=mode,
        sensitivity=sensitivity,
        delta=delta if mode == MODE_ANALYTIC else None,
        charges=[(label, epsilon)],
    )
    return AdherenceSeries(
        window.city, dates, essential, luxury, ratio, meta, raw_essential, raw_luxury
    )
