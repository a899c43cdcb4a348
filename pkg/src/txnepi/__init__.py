"""Synthetic epidemic-correlated transaction data with DP epidemiological analytics."""

from .datagen import (
    CITY_POPULATIONS,
    DEFAULT_CATEGORIES,
    TXN_COLUMNS,
    CategoryProfile,
    GenerationConfig,
    city_shares,
    covid_factor,
    generate,
    privatize_baseline,
)
from .dp_analytics import (
    AnalysisWindow,
    adherence,
    city_of_postal,
    hotspot,
    mobility,
)
from .dp_core import (
    BudgetLedger,
    PrivacyParams,
    add_gaussian_noise,
    analytic_gaussian_scale,
    linear_scale,
)
from .epi_ingest import (
    EpiWeeklySeries,
    parse_epi_csv,
    parse_mobility_csv,
    week_grid,
    weekly_aggregate,
)
from .rt import (
    SerialInterval,
    discretize_serial_interval,
    estimate_rt,
    fit_covariates,
    infectiousness,
    simulate_incidence,
)
from .validation import ccf, compare_mobility, pearson, validate_dataset

__version__ = "0.1.0"

__all__ = [
    "AnalysisWindow",
    "BudgetLedger",
    "CITY_POPULATIONS",
    "CategoryProfile",
    "DEFAULT_CATEGORIES",
    "EpiWeeklySeries",
    "GenerationConfig",
    "PrivacyParams",
    "SerialInterval",
    "TXN_COLUMNS",
    "add_gaussian_noise",
    "adherence",
    "analytic_gaussian_scale",
    "ccf",
    "city_of_postal",
    "city_shares",
    "compare_mobility",
    "covid_factor",
    "discretize_serial_interval",
    "estimate_rt",
    "fit_covariates",
    "generate",
    "hotspot",
    "infectiousness",
    "mobility",
    "linear_scale",
    "parse_epi_csv",
    "parse_mobility_csv",
    "pearson",
    "privatize_baseline",
    "simulate_incidence",
    "validate_dataset",
    "week_grid",
    "weekly_aggregate",
]
