import time

import pandas as pd
import pytest

from txnepi import datagen, demo, epi_ingest
from txnepi.datagen import TXN_COLUMNS


@pytest.fixture(scope="session")
def weekly_epi():
    daily = epi_ingest.parse_epi_csv(demo.epi_csv_text())
    return epi_ingest.weekly_by_country(daily)


@pytest.fixture(scope="session")
def default_config():
    return datagen.GenerationConfig()


@pytest.fixture(scope="session")
def full_table(weekly_epi, default_config):
    """Full-scale default generation; returns (table, elapsed seconds)."""
    t0 = time.perf_counter()
    table = datagen.generate(default_config, weekly_epi)
    return table, time.perf_counter() - t0


@pytest.fixture(scope="session")
def small_config():
    return datagen.GenerationConfig(merchant_count=400, seed=7)


@pytest.fixture(scope="session")
def small_table(weekly_epi, small_config):
    return datagen.generate(small_config, weekly_epi)


def _row(mid, day, category, postal, txn_type, count, spend=100.0):
    return {
        "id": mid,
        "merchant_id": mid,
        "date": day,
        "merch_category": category,
        "merch_postal_code": postal,
        "transaction_type": txn_type,
        "spendamt": spend,
        "nb_transactions": count,
    }


@pytest.fixture()
def desk_table():
    """Small hand-built transaction table with known sums (grid dates)."""
    d1, d2, d3 = "2020-03-03", "2020-03-10", "2020-03-17"
    rows = [
        # Medellin offline retail across two postals
        _row(1, d1, "General Retail Stores", "05001", "OFFLINE", 10),
        _row(1, d2, "General Retail Stores", "05001", "OFFLINE", 12),
        _row(2, d1, "General Retail Stores", "05002", "OFFLINE", 7),
        _row(2, d3, "General Retail Stores", "05002", "OFFLINE", 5),
        # Medellin online rows (excluded from hotspot)
        _row(3, d1, "Restaurants", "05003", "ONLINE", 20),
        _row(3, d2, "Restaurants", "05003", "ONLINE", 22),
        # Medellin essentials
        _row(4, d1, "Grocery Stores/Supermarkets", "05004", "OFFLINE", 30),
        _row(4, d2, "Grocery Stores/Supermarkets", "05004", "OFFLINE", 31),
        _row(5, d1, "Drug Stores/Pharmacies", "05005", "OFFLINE", 9),
        _row(5, d2, "Drug Stores/Pharmacies", "05005", "ONLINE", 4),
        # Medellin luxury
        _row(6, d1, "Hotels/Motels", "05006", "OFFLINE", 6),
        _row(6, d2, "Hotels/Motels", "05006", "ONLINE", 3),
        _row(7, d1, "Bars/Discotheques", "05007", "OFFLINE", 11),
        # Medellin transit (neither essential nor luxury)
        _row(8, d1, "Airlines", "05008", "ONLINE", 15),
        _row(8, d2, "Airlines", "05008", "OFFLINE", 14),
        # Other cities, same dates
        _row(9, d1, "Restaurants", "110111", "OFFLINE", 40),
        _row(9, d2, "Restaurants", "110111", "OFFLINE", 42),
        _row(10, d1, "Grocery Stores/Supermarkets", "70000-000", "OFFLINE", 25),
        _row(11, d1, "Hospitals", "8320000", "OFFLINE", 8),
        _row(11, d2, "Utilities: Electric, Gas, Water", "8320000", "ONLINE", 13),
    ]
    return pd.DataFrame(rows, columns=TXN_COLUMNS)
