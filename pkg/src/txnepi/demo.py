"""Deterministic fabricated inputs for demos and tests.

Real daily death counts are not bundled; this module writes an OWID-style
CSV with smooth synthetic waves per country so the full pipeline can run
offline. The waves are fixed formulas (no RNG), so every call produces the
same bytes.
"""

from __future__ import annotations

import math
from datetime import date, timedelta

from .epi_ingest import DEFAULT_GRID_END, DEFAULT_GRID_START

# (center date, width in days, peak daily deaths)
COUNTRY_WAVES = {
    "Colombia": [
        (date(2020, 7, 15), 35, 180.0),
        (date(2021, 1, 20), 30, 220.0),
        (date(2021, 6, 20), 35, 320.0),
        (date(2022, 2, 1), 25, 90.0),
    ],
    "Brazil": [
        (date(2020, 5, 20), 40, 400.0),
        (date(2021, 3, 25), 45, 900.0),
        (date(2022, 2, 10), 25, 250.0),
    ],
    "Chile": [
        (date(2020, 6, 15), 30, 120.0),
        (date(2021, 4, 10), 45, 90.0),
        (date(2022, 2, 20), 25, 130.0),
    ],
}

CASES_PER_DEATH = 30.0
CASE_LEAD_DAYS = 10


def daily_deaths(country: str, day: date) -> int:
    total = 0.0
    for center, width, peak in COUNTRY_WAVES[country]:
        z = (day - center).days / width
        total += peak * math.exp(-0.5 * z * z)
    return round(total)


def daily_cases(country: str, day: date) -> int:
    return round(CASES_PER_DEATH * daily_deaths(country, day + timedelta(days=CASE_LEAD_DAYS)))


def epi_csv_text(
    start: date = DEFAULT_GRID_START - timedelta(days=6),
    end: date = DEFAULT_GRID_END,
    countries: list[str] | None = None,
) -> str:
    """OWID-style daily CSV covering [start, end] for the demo countries."""
    countries = countries or sorted(COUNTRY_WAVES)
    lines = ["location,date,new_cases,new_deaths"]
    for country in countries:
        day = start
        while day <= end:
            lines.append(
                f"{country},{day.isoformat()},{daily_cases(country, day)},"
                f"{daily_deaths(country, day)}"
            )
            day += timedelta(days=1)
    return "\n".join(lines) + "\n"


def write_epi_csv(path, **kwargs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(epi_csv_text(**kwargs))
