"""YAML configuration: one sectioned file drives generation and analyses.

Sections: ``cities`` (name -> population), ``categories`` (list of category
profiles), ``generation`` (seed, grid, dispersion), ``privacy`` (epsilon,
mode, bounds). Every section and key is optional; omissions fall back to the
package defaults, and CLI flags override individual keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import yaml

from .datagen import (
    CITY_POPULATIONS,
    DEFAULT_CATEGORIES,
    CategoryProfile,
    GenerationConfig,
)
from .dp_analytics import DEFAULT_UPPER_BOUND
from .dp_core import DEFAULT_DELTA, MODE_LINEAR
from .errors import ParameterError


@dataclass
class PrivacySettings:
    epsilon: float = 1.0  # per-release budget
    total_epsilon: float | None = None  # run-wide ledger budget; None = per release
    delta: float = DEFAULT_DELTA
    mode: str = MODE_LINEAR
    upper_bound: float = DEFAULT_UPPER_BOUND


@dataclass
class AppConfig:
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    privacy: PrivacySettings = field(default_factory=PrivacySettings)


def _parse_date(value, key: str) -> date:
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise ParameterError(f"{key}: unparseable date {value!r}") from exc


def _category_profiles(raw: list[dict]) -> list[CategoryProfile]:
    profiles = []
    for entry in raw:
        if "name" not in entry:
            raise ParameterError("every category entry needs a 'name'")
        defaults = next(
            (c for c in DEFAULT_CATEGORIES if c.name == entry["name"]), None
        )
        def pick(key, fallback):
            if key in entry:
                return entry[key]
            return getattr(defaults, key) if defaults is not None else fallback
        profiles.append(
            CategoryProfile(
                name=entry["name"],
                covid_multiplier=float(pick("covid_multiplier", 0.0)),
                base_volume=float(pick("base_volume", 100.0)),
                typical_ticket=float(pick("typical_ticket", 50.0)),
                online_share=float(pick("online_share", 0.3)),
                share_weight=float(pick("share_weight", 1.0)),
                response_lag=int(pick("response_lag", 1)),
            )
        )
    return profiles


def config_from_mapping(raw: dict) -> AppConfig:
    raw = raw or {}
    unknown = set(raw) - {"cities", "categories", "generation", "privacy"}
    if unknown:
        raise ParameterError(f"unknown config sections: {sorted(unknown)}")

    gen_raw = dict(raw.get("generation") or {})
    kwargs = {}
    for key in ("seed", "merchant_count"):
        if key in gen_raw:
            kwargs[key] = int(gen_raw.pop(key))
    for key in ("noise_sigma", "baseline_epsilon"):
        if key in gen_raw:
            kwargs[key] = float(gen_raw.pop(key))
    for key in ("grid_start", "grid_end"):
        if key in gen_raw:
            kwargs[key] = _parse_date(gen_raw.pop(key), key)
    if gen_raw:
        raise ParameterError(f"unknown generation keys: {sorted(gen_raw)}")

    if "cities" in raw and raw["cities"]:
        kwargs["populations"] = {str(k): int(v) for k, v in raw["cities"].items()}
    if "categories" in raw and raw["categories"]:
        kwargs["categories"] = _category_profiles(raw["categories"])
    generation = GenerationConfig(**kwargs)

    priv_raw = dict(raw.get("privacy") or {})
    total = priv_raw.pop("total_epsilon", None)
    privacy = PrivacySettings(
        epsilon=float(priv_raw.pop("epsilon", 1.0)),
        total_epsilon=float(total) if total is not None else None,
        delta=float(priv_raw.pop("delta", DEFAULT_DELTA)),
        mode=str(priv_raw.pop("mode", MODE_LINEAR)),
        upper_bound=float(priv_raw.pop("upper_bound", DEFAULT_UPPER_BOUND)),
    )
    if priv_raw:
        raise ParameterError(f"unknown privacy keys: {sorted(priv_raw)}")
    return AppConfig(generation=generation, privacy=privacy)


def load_config(path) -> AppConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is not None and not isinstance(raw, dict):
        raise ParameterError(f"config root must be a mapping, got {type(raw).__name__}")
    return config_from_mapping(raw or {})


def default_config_yaml() -> str:
    """Render the package defaults as a ready-to-edit config file."""
    gen = GenerationConfig()
    lines = [
        "generation:",
        f"  seed: {gen.seed}",
        f"  merchant_count: {gen.merchant_count}",
        f"  grid_start: {gen.grid_start.isoformat()}",
        f"  grid_end: {gen.grid_end.isoformat()}",
        f"  noise_sigma: {gen.noise_sigma}",
        f"  baseline_epsilon: {gen.baseline_epsilon}",
        "cities:",
    ]
    for city, pop in CITY_POPULATIONS.items():
        lines.append(f'  "{city}": {pop}')
    lines.append("categories:")
    for c in DEFAULT_CATEGORIES:
        lines.extend(
            [
                f'  - name: "{c.name}"',
                f"    covid_multiplier: {c.covid_multiplier}",
                f"    base_volume: {c.base_volume}",
                f"    typical_ticket: {c.typical_ticket}",
                f"    online_share: {c.online_share}",
                f"    share_weight: {c.share_weight}",
                f"    response_lag: {c.response_lag}",
            ]
        )
    lines.extend(
        [
            "privacy:",
            "  epsilon: 1.0",
            "  # total_epsilon: 10.0",
            f"  delta: {DEFAULT_DELTA}",
            f"  mode: {MODE_LINEAR}",
            f"  upper_bound: {DEFAULT_UPPER_BOUND}",
        ]
    )
    return "\n".join(lines) + "\n"
