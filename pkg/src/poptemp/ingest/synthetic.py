"""Deterministic synthetic worlds and on-disk fixture sets.

Used by the tests and by the full-scale performance check. Temperatures are
kept on a 1/64 degree lattice so that "uniform +d per epoch" scenarios are
exact in binary floating point whenever ``d`` is itself dyadic.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ..raster import GridRaster, Orientation, SnapshotSeries, reorient
from .ascii_grid import serialize_ascii_grid
from .cru import CRU_NODATA
from .tables import (CityRecord, CityTable, MigrationStockTable, serialize_city_table,
                     serialize_migration_tables)
from .textgrid import format_int_rows

_LATTICE = 64.0


@dataclass(frozen=True)
class TrendSpec:
    """How temperature and population evolve between epochs.

    temperature : ``"random"`` (cell-specific trends plus noise), ``"uniform"``
        (every cell warms by exactly ``warming_per_epoch``) or ``"constant"``.
    population : ``"random"`` (heterogeneous growth), ``"constant"`` or
        ``"shift"`` (fixed total, drifting towards warm cells).
    """

    temperature: str = "random"
    population: str = "random"
    warming_per_epoch: float = 0.25
    ocean_fraction: float = 0.2

    @classmethod
    def uniform_warming(cls, d: float = 1.0, **kw) -> "TrendSpec":
        return cls(temperature="uniform", population="random", warming_per_epoch=d, **kw)

    @classmethod
    def population_shift(cls, **kw) -> "TrendSpec":
        return cls(temperature="constant", population="shift", **kw)

    @classmethod
    def constant_population(cls, **kw) -> "TrendSpec":
        return cls(temperature="random", population="constant", **kw)


class SyntheticWorld(NamedTuple):
    pop: SnapshotSeries
    temp: SnapshotSeries
    cities: CityTable
    migration: MigrationStockTable
    area: GridRaster


def _lattice(x):
    return np.round(np.asarray(x) * _LATTICE) / _LATTICE


def _climatology(rng, lats, n_cols):
    base = 28.0 - 40.0 * np.sin(np.deg2rad(np.abs(lats)))[:, None] ** 2
    return _lattice(base + rng.normal(0.0, 2.0, size=(lats.size, n_cols)))


def generate_synthetic_world(seed: int, n_rows: int, n_cols: int, epochs: Sequence[int],
                             trend_spec: TrendSpec | None = None, n_cities: int = 6,
                             n_countries: int = 5) -> SyntheticWorld:
    if n_rows < 1 or n_cols < 1:
        raise ValueError("grid dimensions must be >= 1")
    epochs = [int(e) for e in epochs]
    if not epochs:
        raise ValueError("need at least one epoch")
    spec = trend_spec or TrendSpec()
    rng = np.random.default_rng(seed)
    template = GridRaster.from_array(np.zeros((n_rows, n_cols)))
    lats = template.row_latitudes()
    shape = (n_rows, n_cols)

    land = rng.random(shape) >= spec.ocean_fraction
    if not land.any():
        land.flat[0] = True

    area_vals = np.cos(np.deg2rad(lats))[:, None] * np.ones(shape) * 3091.0 * template.cell_size ** 2
    area = template.replace(values=np.where(land, area_vals, np.nan), mask=land)

    # temperatures
    base = _climatology(rng, lats, n_cols)
    temps = []
    if spec.temperature == "uniform":
        for k in range(len(epochs)):
            temps.append(base + k * spec.warming_per_epoch)
    elif spec.temperature == "constant":
        temps = [base.copy() for _ in epochs]
    elif spec.temperature == "random":
        trend = rng.normal(spec.warming_per_epoch, 0.3, size=shape)
        for k in range(len(epochs)):
            temps.append(_lattice(base + k * trend + rng.normal(0.0, 0.2, size=shape)))
    else:
        raise ValueError(f"unknown temperature trend {spec.temperature!r}")

    # populations
    pop0 = np.round(rng.lognormal(8.0, 2.0, size=shape))
    pops = []
    if spec.population == "constant":
        pops = [pop0.copy() for _ in epochs]
    elif spec.population == "random":
        growth = rng.normal(0.15, 0.2, size=shape)
        for k in range(len(epochs)):
            pops.append(np.round(pop0 * np.exp(k * growth + rng.normal(0, 0.05, size=shape))))
    elif spec.population == "shift":
        z = (base - base[land].mean()) / (base[land].std() or 1.0)
        total = pop0[land].sum()
        for k in range(len(epochs)):
            p = np.where(land, pop0 * np.exp(0.5 * k * z), 0.0)
            pops.append(p * (total / p.sum()))
    else:
        raise ValueError(f"unknown population trend {spec.population!r}")

    temp_series = SnapshotSeries(epochs, [template.replace(values=np.where(land, t, np.nan),
                                                           mask=land) for t in temps])
    pop_series = SnapshotSeries(epochs, [template.replace(values=np.where(land, p, np.nan),
                                                          mask=land) for p in pops])

    # cities: a point somewhere inside a random land cell
    land_cells = np.argwhere(land)
    records = []
    for i in range(n_cities):
        r, c = land_cells[rng.integers(len(land_cells))]
        lat = float(lats[r] + (rng.random() - 0.5) * 0.8 * template.cell_size)
        lon = float(template.col_longitudes()[c] + (rng.random() - 0.5) * 0.8 * template.cell_size)
        frac = rng.uniform(0.05, 0.5)
        popd = {e: float(np.floor(pops[k][r, c] * frac * rng.uniform(0.8, 1.0)))
                for k, e in enumerate(epochs)}
        records.append(CityRecord(f"C{i:04d}", f"City {i}", f"K{i % n_countries:02d}",
                                  lat, lon, popd))
    cities = CityTable(epochs, records)

    # migration between a handful of countries
    countries = tuple(f"K{i:02d}" for i in range(n_countries))
    ctemp0 = _lattice(rng.uniform(-5.0, 28.0, size=n_countries))
    cpop0 = np.round(rng.uniform(1e6, 1e8, size=n_countries))
    stock0 = np.round(rng.lognormal(9.0, 1.5, size=(n_countries, n_countries)))
    stock0[rng.random((n_countries, n_countries)) < 0.2] = 0.0
    np.fill_diagonal(stock0, 0.0)
    stocks, ctemps, cpops = {}, {}, {}
    for k, e in enumerate(epochs):
        s = np.round(stock0 * np.exp(k * rng.normal(0.1, 0.2, size=stock0.shape)))
        np.fill_diagonal(s, 0.0)
        stocks[e] = s
        ctemps[e] = _lattice(ctemp0 + 0.1 * k)
        cpops[e] = np.round(cpop0 * (1.0 + 0.1 * k))
    migration = MigrationStockTable(countries, tuple(epochs), stocks, ctemps, cpops)
    return SyntheticWorld(pop_series, temp_series, cities, migration, area)


# --------------------------------------------------------------------------
# On-disk fixture sets in the raw input formats


def _split_counts(rng, coarse: np.ndarray, factor: int) -> np.ndarray:
    """Spread integer coarse counts over factor x factor fine cells (sums preserved)."""
    fine = np.repeat(np.repeat(np.floor(coarse / factor**2), factor, 0), factor, 1)
    remainder = coarse - np.floor(coarse / factor**2) * factor**2
    fine[::factor, ::factor] += remainder
    return fine


def write_synthetic_inputs(directory, seed: int = 0, n_lat: int = 36, n_lon: int = 72,
                           factor: int = 6, start_year: int = 1901, n_years: int = 40,
                           population_epochs: Sequence[int] = (1910, 1920, 1930),
                           center_years: Sequence[int] | None = None, window: int = 11,
                           trend_spec: TrendSpec | None = None, with_tables: bool = True,
                           extra_config: dict | None = None) -> Path:
    """Write a complete raw-input fixture set and a config file; return the config path.

    Population and area grids are written at ``factor`` times the resolution
    of the temperature archive, headed ASCII grids, north to south, with
    ``-9999`` at sea. The temperature archive is CRU-style text.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    spec = trend_spec or TrendSpec()
    population_epochs = [int(e) for e in population_epochs]
    if center_years is None:
        center_years = population_epochs
    template = GridRaster.from_array(np.zeros((n_lat, n_lon)))
    lats = template.row_latitudes()
    shape = (n_lat, n_lon)
    land = rng.random(shape) >= spec.ocean_fraction
    fine_land = np.repeat(np.repeat(land, factor, 0), factor, 1)

    def fine_grid(values):
        fine_cs = template.cell_size / factor
        g = GridRaster.from_array(np.where(fine_land, values, np.nan), fine_land,
                                  cell_size=fine_cs)
        return reorient(g, Orientation.NORTH_TO_SOUTH)

    fine_lats = np.repeat(lats, factor)
    area = np.round(np.cos(np.deg2rad(fine_lats))[:, None] * np.ones(fine_land.shape)
                    * 8600.0)
    (directory / "gridarea.asc").write_bytes(serialize_ascii_grid(fine_grid(area)))

    pop0 = np.round(rng.lognormal(8.0, 2.0, size=shape))
    growth = rng.normal(0.15, 0.2, size=shape)
    pop_dir = directory / "population"
    pop_dir.mkdir(exist_ok=True)
    coarse_pops = {}
    for k, e in enumerate(population_epochs):
        if spec.population == "constant":
            p = pop0
        else:
            p = np.round(pop0 * np.exp(k * growth))
        coarse_pops[e] = np.where(land, p, 0.0)
        fine = _split_counts(rng, coarse_pops[e], factor)
        (pop_dir / f"popc{e}AD.asc").write_bytes(serialize_ascii_grid(fine_grid(fine)))

    base = 280.0 - 400.0 * np.sin(np.deg2rad(np.abs(lats)))[:, None] ** 2 \
        + rng.normal(0, 20, size=shape)
    trend = rng.normal(0.1, 0.05, size=shape)
    season = np.cos(2 * np.pi * (np.arange(12) - 6) / 12.0)
    amplitude = 5.0 + 150.0 * np.abs(np.sin(np.deg2rad(lats)))[:, None]
    with open(directory / "cru.dat", "wb") as fh:
        for y in range(n_years):
            yr = start_year + y
            if spec.temperature == "constant":
                level = base
            elif spec.temperature == "uniform":
                level = base + spec.warming_per_epoch * 10.0 * y
            else:
                level = base + trend * y
            months = level[None] + season[:, None, None] * amplitude[None]
            if spec.temperature == "random":
                months = months + rng.normal(0, 8, size=(12,) + shape)
            vals = np.round(months).astype(np.int64)
            vals[:, ~land] = CRU_NODATA
            if spec.temperature == "random" and n_years > 2 and y == n_years // 2:
                r, c = np.argwhere(land)[0]
                vals[3, r, c] = CRU_NODATA
            fh.write(format_int_rows(vals.reshape(12 * n_lat, n_lon)))

    config = {
        "area_grid": "gridarea.asc",
        "population_grids": "population/popc{epoch}AD.asc",
        "temperature_archive": "cru.dat",
        "temperature_start_year": start_year,
        "temperature_n_years": n_years,
        "temperature_n_lat": n_lat,
        "temperature_n_cols": n_lon,
        "epochs": ",".join(str(e) for e in population_epochs),
        "temperature_centers": ",".join(str(c) for c in center_years),
        "window": window,
        "aggregation_factor": factor,
        "output_dir": "out",
    }
    if with_tables:
        world = generate_synthetic_world(seed + 1, n_lat, n_lon, population_epochs,
                                         n_cities=8, n_countries=5)
        # re-home cities onto populated land of this fixture
        land_cells = np.argwhere(land)
        recs = []
        for i, rec in enumerate(world.cities.records):
            r, c = land_cells[(i * 7919) % len(land_cells)]
            frac = 0.1 + 0.05 * i
            pops = {e: float(np.floor(coarse_pops[e][r, c] * frac)) for e in population_epochs}
            recs.append(CityRecord(rec.city_id, rec.name, rec.country,
                                   float(lats[r]), float(template.col_longitudes()[c]), pops))
        (directory / "cities.csv").write_bytes(
            serialize_city_table(CityTable(population_epochs, recs)))
        stocks, temps, pops = serialize_migration_tables(world.migration)
        (directory / "migration_stocks.csv").write_bytes(stocks)
        (directory / "country_temps.csv").write_bytes(temps)
        (directory / "country_pops.csv").write_bytes(pops)
        config.update(city_table="cities.csv", migration_stocks="migration_stocks.csv",
                      country_temps="country_temps.csv", country_pops="country_pops.csv")
    config.update(extra_config or {})
    path = directory / "run.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in config.items()))
    return path
