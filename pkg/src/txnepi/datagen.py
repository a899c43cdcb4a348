"""Synthetic weekly merchant-transaction generator.

Each merchant gets a city (population-proportional), a category, and a postal
code matching its city's pattern. Weekly transaction counts follow the
category's base volume scaled by a pandemic factor driven by lagged,
normalized national death counts, with lognormal dispersion. Counts are
rounded and clamped at zero so negative counts cannot occur.

Generation is deterministic: every merchant draws from an independent
substream keyed by (seed, merchant_id), and rows are emitted in
(merchant_id, date) order, so serial and per-merchant-parallel runs agree
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np
import pandas as pd

from .dp_core import linear_scale
from .epi_ingest import (
    CITY_COUNTRY,
    DEFAULT_GRID_END,
    DEFAULT_GRID_START,
    EpiWeeklySeries,
    week_grid,
)
from .errors import GenerationError, ParameterError

CITY_POPULATIONS = {
    "Medellin": 2_569_000,
    "Bogota DC": 7_181_000,
    "Brasilia": 4_935_000,
    "Santiago": 5_561_000,
}

ONLINE = "ONLINE"
OFFLINE = "OFFLINE"

TXN_COLUMNS = [
    "id",
    "merchant_id",
    "date",
    "merch_category",
    "merch_postal_code",
    "transaction_type",
    "spendamt",
    "nb_transactions",
]


@dataclass(frozen=True)
class CategoryProfile:
    """Behaviour of one merchant category.

    ``covid_multiplier`` is the signed pandemic effect: weekly volume is
    scaled by max(0, 1 + multiplier * lagged normalized deaths).
    ``response_lag`` is the delay, in weeks, between the death signal and the
    spending response.
    """

    name: str
    covid_multiplier: float
    base_volume: float  # expected weekly transactions per merchant
    typical_ticket: float  # mean spend per transaction
    online_share: float
    share_weight: float = 1.0
    response_lag: int = 1

    def __post_init__(self):
        if self.share_weight <= 0:
            raise ParameterError(f"{self.name}: share_weight must be > 0")
        if self.base_volume <= 0 or self.typical_ticket <= 0:
            raise ParameterError(f"{self.name}: base_volume and typical_ticket must be > 0")
        if not 0 <= self.online_share <= 1:
            raise ParameterError(f"{self.name}: online_share must lie in [0, 1]")
        if self.response_lag not in (0, 1, 2, 3):
            raise ParameterError(f"{self.name}: response_lag must be in 0..3")


# Multiplier signs are chosen so the generated data reproduces the intended
# correlation directions (hospitals positive, utilities flat).
DEFAULT_CATEGORIES = [
    CategoryProfile("Airlines", -0.6, 40, 260.0, 0.75),
    CategoryProfile("Bars/Discotheques", -0.8, 60, 18.0, 0.05),
    CategoryProfile("Computer Network/Information Services", 0.2, 70, 55.0, 0.90),
    CategoryProfile("Drug Stores/Pharmacies", 0.4, 90, 24.0, 0.15),
    CategoryProfile("General Retail Stores", -0.4, 120, 42.0, 0.30),
    CategoryProfile("Grocery Stores/Supermarkets", 0.3, 170, 32.0, 0.08),
    CategoryProfile("Hospitals", 0.5, 50, 130.0, 0.05),
    CategoryProfile("Hotels/Motels", -0.7, 45, 150.0, 0.55),
    CategoryProfile("Restaurants", -0.7, 150, 26.0, 0.20),
    CategoryProfile("Utilities: Electric, Gas, Water", 0.0, 80, 68.0, 0.60),
]


@dataclass
class GenerationConfig:
    seed: int = 42
    merchant_count: int = 10_000
    grid_start: date = DEFAULT_GRID_START
    grid_end: date = DEFAULT_GRID_END
    noise_sigma: float = 0.25
    categories: list[CategoryProfile] = field(
        default_factory=lambda: list(DEFAULT_CATEGORIES)
    )
    populations: dict[str, int] = field(default_factory=lambda: dict(CITY_POPULATIONS))
    baseline_epsilon: float = 1.0

    def __post_init__(self):
        if self.merchant_count < 1:
            raise ParameterError("merchant_count must be >= 1")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be >= 0")
        if not self.categories:
            raise ParameterError("at least one category profile is required")
        if self.seed < 0:
            raise ParameterError("seed must be a non-negative integer")


def city_shares(populations: dict[str, int]) -> dict[str, float]:
    """Percentage of merchants per city, proportional to population."""
    for city, pop in populations.items():
        if pop <= 0:
            raise ParameterError(f"population of {city} must be > 0, got {pop}")
    total = sum(populations.values())
    if total <= 0:
        raise ParameterError("total population must be > 0")
    return {city: pop / total * 100.0 for city, pop in populations.items()}


def assign_postal_code(city: str, rng: np.random.Generator) -> str:
    """Draw a postal code matching the city's pattern.

    Medellin codes start '05', Bogota codes start '11', Brasilia codes end
    '-000', Santiago codes are plain 7-digit numbers starting '8' so they
    match no other city's rule.
    """
    if city == "Medellin":
        return f"05{rng.integers(0, 1000):03d}"
    if city == "Bogota DC":
        return f"11{rng.integers(0, 10000):04d}"
    if city == "Brasilia":
        return f"7{rng.integers(0, 10000):04d}-000"
    if city == "Santiago":
        return f"8{rng.integers(0, 1_000_000):06d}"
    raise ParameterError(f"unknown city {city!r}")


def covid_factor(multiplier: float, d_hat):
    """Pandemic volume factor: max(0, 1 + multiplier * d_hat), d_hat in [0, 1]."""
    d = np.asarray(d_hat, dtype=float)
    if np.any(d < 0) or np.any(d > 1):
        raise ParameterError("d_hat must lie in [0, 1]")
    factor = np.maximum(0.0, 1.0 + multiplier * d)
    return float(factor) if np.isscalar(d_hat) else factor


def _lagged(values: np.ndarray, lag: int) -> np.ndarray:
    if lag == 0:
        return values
    out = np.zeros_like(values)
    out[lag:] = values[:-lag]
    return out


def _dnorm_on_grid(series: EpiWeeklySeries, grid: list[date]) -> np.ndarray:
    index = {d: i for i, d in enumerate(series.week_end_dates)}
    positions = []
    for d in grid:
        if d not in index:
            raise GenerationError(
                f"epi series for {series.country!r} does not cover week {d.isoformat()}"
            )
        positions.append(index[d])
    return series.deaths_normalized[positions]


def generate(
    config: GenerationConfig,
    epi: dict[str, EpiWeeklySeries],
    seed: int | None = None,
) -> pd.DataFrame:
    """Generate the synthetic merchant-week table.

    ``epi`` maps country names to weekly series covering the whole grid.
    Returns a DataFrame with the canonical transaction columns, sorted by
    (merchant_id, date); ``id`` mirrors ``merchant_id``.
    """
    seed = config.seed if seed is None else seed
    grid = week_grid(config.grid_start, config.grid_end)
    n_weeks = len(grid)
    grid_iso = np.array([d.isoformat() for d in grid], dtype=object)

    cities = sorted(config.populations)
    shares = city_shares(config.populations)
    city_cum = np.cumsum([shares[c] / 100.0 for c in cities])
    countries = []
    for c in cities:
        if c not in CITY_COUNTRY:
            raise ParameterError(f"no country mapping for city {c!r}")
        countries.append(CITY_COUNTRY[c])

    missing = [ctry for ctry in set(countries) if ctry not in epi]
    if missing:
        raise GenerationError(f"no epi series for countries: {', '.join(sorted(missing))}")

    cats = config.categories
    weights = np.array([c.share_weight for c in cats], dtype=float)
    cat_cum = np.cumsum(weights / weights.sum())

    # factor[country][cat_idx] = weekly volume factor from lagged normalized deaths
    factors = {}
    for country in set(countries):
        dnorm = _dnorm_on_grid(epi[country], grid)
        factors[country] = [
            covid_factor(c.covid_multiplier, _lagged(dnorm, c.response_lag)) for c in cats
        ]

    n = config.merchant_count
    merchant_city = np.empty(n, dtype=object)
    merchant_cat = np.empty(n, dtype=np.int64)
    merchant_postal = np.empty(n, dtype=object)
    counts = np.empty((n, n_weeks), dtype=np.int64)
    spend = np.empty((n, n_weeks), dtype=float)
    is_online = np.empty((n, n_weeks), dtype=bool)

    for m in range(n):
        merchant_id = m + 1
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, merchant_id))))
        city = cities[int(np.searchsorted(city_cum, rng.random(), side="right"))]
        postal = assign_postal_code(city, rng)
        ci = int(np.searchsorted(cat_cum, rng.random(), side="right"))
        cat = cats[ci]

        eta = rng.normal(0.0, config.noise_sigma, n_weeks)
        eta_spend = rng.normal(0.0, config.noise_sigma, n_weeks)
        online_draw = rng.random(n_weeks)

        expected = cat.base_volume * factors[CITY_COUNTRY[city]][ci] * np.exp(eta)
        week_counts = np.maximum(np.rint(expected), 0).astype(np.int64)

        merchant_city[m] = city
        merchant_cat[m] = ci
        merchant_postal[m] = postal
        counts[m] = week_counts
        spend[m] = week_counts * cat.typical_ticket * np.exp(eta_spend)
        is_online[m] = online_draw < cat.online_share

    merchant_ids = np.repeat(np.arange(1, n + 1), n_weeks)
    cat_names = np.array([c.name for c in cats], dtype=object)
    table = pd.DataFrame(
        {
            "id": merchant_ids,
            "merchant_id": merchant_ids,
            "date": np.tile(grid_iso, n),
            "merch_category": np.repeat(cat_names[merchant_cat], n_weeks),
            "merch_postal_code": np.repeat(merchant_postal, n_weeks),
            "transaction_type": np.where(is_online.ravel(), ONLINE, OFFLINE),
            "spendamt": np.round(spend.ravel(), 2),
            "nb_transactions": counts.ravel(),
        }
    )
    return table


@dataclass(frozen=True)
class FieldScales:
    """Gaussian noise scales for the two released fields of one category."""

    count_scale: float
    spend_scale: float

    def __post_init__(self):
        if self.count_scale < 0 or self.spend_scale < 0:
            raise ParameterError("noise scales must be >= 0")


def default_baseline_template(
    categories: list[CategoryProfile], epsilon: float = 1.0
) -> dict[str, FieldScales]:
    """Baseline privacy scales: counts use the linear rule with T=1 and
    U = ceil(base volume); spend noise matches the typical ticket."""
    return {
        c.name: FieldScales(
            count_scale=linear_scale(3.0, 1, math.ceil(c.base_volume), epsilon),
            spend_scale=c.typical_ticket,
        )
        for c in categories
    }


def privatize_baseline(
    table: pd.DataFrame,
    template: dict[str, FieldScales],
    rng: np.random.Generator,
) -> pd.DataFrame:
    """Apply the baseline privacy template to a transaction table.

    Gaussian noise is added independently to nb_transactions and spendamt of
    every row at its category's scales; counts are then rounded and clamped
    at 0, spend clamped at 0.
    """
    unknown = set(table["merch_category"]) - set(template)
    if unknown:
        raise ParameterError(f"no baseline scales for categories: {sorted(unknown)}")
    count_scale = table["merch_category"].map(
        {name: fs.count_scale for name, fs in template.items()}
    ).to_numpy()
    spend_scale = table["merch_category"].map(
        {name: fs.spend_scale for name, fs in template.items()}
    ).to_numpy()

    out = table.copy()
    n = len(table)
    noisy_counts = table["nb_transactions"].to_numpy() + rng.normal(size=n) * count_scale
    noisy_spend = table["spendamt"].to_numpy() + rng.normal(size=n) * spend_scale
    out["nb_transactions"] = np.maximum(np.rint(noisy_counts), 0).astype(np.int64)
    out["spendamt"] = np.round(np.maximum(noisy_spend, 0.0), 2)
    return out


def write_transactions_csv(table: pd.DataFrame, path) -> None:
    """Write the canonical 8-column CSV (ISO dates, 2-decimal spend)."""
    out = table[TXN_COLUMNS].copy()
    out["spendamt"] = out["spendamt"].map(lambda v: f"{v:.2f}")
    out.to_csv(path, index=False, lineterminator="\n")


def read_transactions_csv(path) -> pd.DataFrame:
    table = pd.read_csv(
        path,
        dtype={
            "id": np.int64,
            "merchant_id": np.int64,
            "date": str,
            "merch_category": str,
            "merch_postal_code": str,
            "transaction_type": str,
            "spendamt": float,
            "nb_transactions": np.int64,
        },
    )
    missing = [c for c in TXN_COLUMNS if c not in table.columns]
    if missing:
        raise ParameterError(f"transaction CSV missing columns: {missing}")
    return table
