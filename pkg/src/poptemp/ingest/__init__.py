"""Readers and writers for the raw input formats, plus synthetic fixtures."""
from .ascii_grid import parse_ascii_grid, read_ascii_grid, serialize_ascii_grid, write_ascii_grid
from .cru import CRU_NODATA, iter_cru_years, parse_cru_dat, serialize_cru_dat, serialize_cru_year
from .synthetic import SyntheticWorld, TrendSpec, generate_synthetic_world, write_synthetic_inputs
from .tables import (CityRecord, CityTable, MigrationMatrix, MigrationStockTable,
                     parse_city_table, parse_migration_tables, serialize_city_table,
                     serialize_migration_tables)
from .textgrid import IngestError

__all__ = [
    "CRU_NODATA", "CityRecord", "CityTable", "IngestError", "MigrationMatrix",
    "MigrationStockTable", "SyntheticWorld", "TrendSpec", "generate_synthetic_world",
    "iter_cru_years", "parse_ascii_grid", "parse_city_table", "parse_cru_dat",
    "parse_migration_tables", "read_ascii_grid", "serialize_ascii_grid",
    "serialize_city_table", "serialize_cru_dat", "serialize_cru_year",
    "serialize_migration_tables", "write_ascii_grid", "write_synthetic_inputs",
]
