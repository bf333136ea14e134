"""Delimited tables: urban agglomerations and international migrant stocks.

City table::

    city_id,name,country,lat,lon,pop_1950,pop_1955,...

Migration tables::

    epoch,origin,destination,stock          (migrant stocks)
    country,epoch,mean_temp_c               (country temperatures)
    country,epoch,population                (country populations)

Empty population fields mean "no estimate", which is not the same as zero.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from ..summation import fsum
from .textgrid import IngestError, open_binary

log = logging.getLogger(__name__)

CITY_FIXED_COLUMNS = ("city_id", "name", "country", "lat", "lon")
STOCK_COLUMNS = ("epoch", "origin", "destination", "stock")
TEMP_COLUMNS = ("country", "epoch", "mean_temp_c")
POP_COLUMNS = ("country", "epoch", "population")
_POP_COLUMN = re.compile(r"^pop_(-?\d+)$")


def _fmt(x: float) -> str:
    return "%.17g" % x


def _read_text(source) -> tuple[list[list[str]], str]:
    with open_binary(source) as (fh, name):
        raw = fh.read()
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise IngestError(f"not UTF-8 text: {exc}", name) from None
    return list(csv.reader(io.StringIO(text))), name


def _number(text, name, lineno, col, what):
    try:
        v = float(text)
    except ValueError:
        raise IngestError(f"unparseable {what} {text!r}", name, lineno, col) from None
    if not math.isfinite(v):
        raise IngestError(f"non-finite {what} {text!r}", name, lineno, col)
    return v


def _integer(text, name, lineno, col, what):
    try:
        return int(text)
    except ValueError:
        raise IngestError(f"unparseable {what} {text!r}", name, lineno, col) from None


def _check_header(rows, expected, name):
    if not rows:
        raise IngestError("empty table", name, 1)
    header = [h.strip() for h in rows[0]]
    if tuple(header) != tuple(expected):
        raise IngestError(f"schema mismatch: expected header {','.join(expected)}, "
                          f"got {','.join(header)}", name, 1)


def _data_rows(rows):
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        yield i, [c.strip() for c in row]


# --------------------------------------------------------------------------
# Cities


@dataclass(frozen=True)
class CityRecord:
    city_id: str
    name: str
    country: str
    lat: float
    lon: float
    populations: dict = field(default_factory=dict)

    def population(self, epoch: int):
        """Population at ``epoch`` or None when there is no estimate."""
        return self.populations.get(epoch)


@dataclass(frozen=True)
class CityTable:
    epochs: tuple
    records: tuple

    def __post_init__(self):
        epochs = tuple(int(e) for e in self.epochs)
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError(f"city table epochs must be strictly increasing: {epochs}")
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self):
        return len(self.records)


def parse_city_table(source) -> CityTable:
    rows, name = _read_text(source)
    if not rows:
        raise IngestError("empty table", name, 1)
    header = [h.strip() for h in rows[0]]
    if tuple(header[:5]) != CITY_FIXED_COLUMNS:
        raise IngestError(
            f"schema mismatch: header must start with {','.join(CITY_FIXED_COLUMNS)}", name, 1)
    epochs = []
    for j, h in enumerate(header[5:], start=6):
        m = _POP_COLUMN.match(h)
        if not m:
            raise IngestError(f"schema mismatch: column {h!r} is not pop_<year>", name, 1, j)
        epochs.append(int(m.group(1)))
    if any(b <= a for a, b in zip(epochs, epochs[1:])):
        raise IngestError(f"schema mismatch: epochs not strictly increasing {epochs}", name, 1)

    records = []
    seen = set()
    for lineno, row in _data_rows(rows):
        if len(row) != len(header):
            raise IngestError(f"schema mismatch: expected {len(header)} fields, found {len(row)}",
                              name, lineno)
        city_id, cname, country = row[0], row[1], row[2]
        if not city_id:
            raise IngestError("empty city_id", name, lineno, 1)
        if city_id in seen:
            raise IngestError(f"duplicate city_id {city_id!r}", name, lineno, 1)
        seen.add(city_id)
        lat = _number(row[3], name, lineno, 4, "latitude")
        lon = _number(row[4], name, lineno, 5, "longitude")
        if not -90 <= lat <= 90:
            raise IngestError(f"invalid coordinate: latitude {lat} outside [-90, 90]",
                              name, lineno, 4)
        if not -180 <= lon <= 360:
            raise IngestError(f"invalid coordinate: longitude {lon} outside [-180, 360]",
                              name, lineno, 5)
        pops = {}
        for j, (epoch, text) in enumerate(zip(epochs, row[5:]), start=6):
            if text == "":
                continue
            p = _number(text, name, lineno, j, "population")
            if p < 0:
                raise IngestError(f"negative population {p} for {epoch}", name, lineno, j)
            pops[epoch] = p
        records.append(CityRecord(city_id, cname, country, lat, lon, pops))
    return CityTable(epochs, records)


def serialize_city_table(table: CityTable) -> bytes:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(list(CITY_FIXED_COLUMNS) + [f"pop_{e}" for e in table.epochs])
    for r in table.records:
        pops = ["" if r.population(e) is None else _fmt(r.population(e)) for e in table.epochs]
        w.writerow([r.city_id, r.name, r.country, _fmt(r.lat), _fmt(r.lon)] + pops)
    return out.getvalue().encode("utf-8")


# --------------------------------------------------------------------------
# Migration


@dataclass(frozen=True)
class MigrationMatrix:
    """Origin x destination migrant stocks at one epoch, with country temperatures."""

    epoch: int
    countries: tuple
    stocks: np.ndarray
    temps: np.ndarray
    population: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.countries)
        stocks = np.array(self.stocks, dtype=np.float64)
        temps = np.array(self.temps, dtype=np.float64)
        if stocks.shape != (n, n) or temps.shape != (n,):
            raise ValueError("stock matrix and temperature vector must match the country list")
        if np.any(stocks < 0):
            raise ValueError("migrant stocks must be non-negative")
        np.fill_diagonal(stocks, 0.0)
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "stocks", stocks)
        object.__setattr__(self, "temps", temps)


@dataclass(frozen=True)
class MigrationStockTable:
    """Migrant stocks for several epochs keyed by country code.

    ``temps`` and ``populations`` map epoch to an array aligned with
    ``countries``; NaN marks a country without an entry at that epoch.
    """

    countries: tuple
    epochs: tuple
    stocks: dict
    temps: dict
    populations: dict = field(default_factory=dict)

    def matrix(self, epoch: int) -> MigrationMatrix:
        if epoch not in self.stocks:
            raise KeyError(f"no migrant stocks for epoch {epoch}")
        t = self.temps[epoch]
        present = np.flatnonzero(~np.isnan(t))
        countries = tuple(self.countries[i] for i in present)
        stocks = self.stocks[epoch][np.ix_(present, present)]
        pop = self.populations.get(epoch)
        return MigrationMatrix(epoch, countries, stocks, t[present],
                               None if pop is None else pop[present])

    def world_population(self, epoch: int) -> float:
        pop = self.populations.get(epoch)
        if pop is None or np.all(np.isnan(pop)):
            raise KeyError(f"no country populations for epoch {epoch}")
        return fsum(pop[~np.isnan(pop)])


def _country_epoch_table(rows, columns, name, what, lower=None):
    _check_header(rows, columns, name)
    values = {}
    for lineno, row in _data_rows(rows):
        if len(row) != 3:
            raise IngestError(f"expected 3 fields, found {len(row)}", name, lineno)
        country = row[0]
        if not country:
            raise IngestError("empty country code", name, lineno, 1)
        epoch = _integer(row[1], name, lineno, 2, "epoch")
        v = _number(row[2], name, lineno, 3, what)
        if lower is not None and v < lower:
            raise IngestError(f"negative {what} {v}", name, lineno, 3)
        if (country, epoch) in values:
            raise IngestError(f"duplicate entry for {country} {epoch}", name, lineno)
        values[(country, epoch)] = v
    return values


def parse_migration_tables(stocks_source, temps_source, pops_source=None) -> MigrationStockTable:
    """Parse migrant stocks plus country temperatures (and optionally populations).

    Every country named in the stock table must have a temperature at each
    epoch it appears in.
    """
    temp_rows, temp_name = _read_text(temps_source)
    temps = _country_epoch_table(temp_rows, TEMP_COLUMNS, temp_name, "temperature")
    pops = {}
    if pops_source is not None:
        pop_rows, pop_name = _read_text(pops_source)
        pops = _country_epoch_table(pop_rows, POP_COLUMNS, pop_name, "population", lower=0)

    countries = sorted({c for c, _ in temps})
    known = set(countries)
    temp_epochs = {e for _, e in temps}
    index = {c: i for i, c in enumerate(countries)}
    n = len(countries)

    rows, name = _read_text(stocks_source)
    _check_header(rows, STOCK_COLUMNS, name)
    stocks: dict = {}
    seen = set()
    for lineno, row in _data_rows(rows):
        if len(row) != 4:
            raise IngestError(f"expected 4 fields, found {len(row)}", name, lineno)
        epoch = _integer(row[0], name, lineno, 1, "epoch")
        o, d = row[1], row[2]
        for col, c in ((2, o), (3, d)):
            if c not in known:
                raise IngestError(f"unknown country code {c!r} (absent from temperature table)",
                                  name, lineno, col)
            if (c, epoch) not in temps:
                what = "missing epoch" if epoch not in temp_epochs else "missing temperature"
                raise IngestError(f"{what}: no temperature for {c} in {epoch}", name, lineno, col)
        stock = _number(row[3], name, lineno, 4, "stock")
        if stock < 0:
            raise IngestError(f"negative stock {stock}", name, lineno, 4)
        if (epoch, o, d) in seen:
            raise IngestError(f"duplicate stock entry {o}->{d} in {epoch}", name, lineno)
        seen.add((epoch, o, d))
        if o == d:
            log.debug("%s:%d: ignoring diagonal stock %s->%s", name, lineno, o, d)
            continue
        if epoch not in stocks:
            stocks[epoch] = np.zeros((n, n))
        stocks[epoch][index[o], index[d]] = stock

    epochs = tuple(sorted(stocks))

    def by_epoch(table):
        out = {}
        for (c, e), v in table.items():
            out.setdefault(e, np.full(n, np.nan))[index[c]] = v
        return out

    temp_arrays = by_epoch(temps)
    for e in epochs:
        temp_arrays.setdefault(e, np.full(n, np.nan))
    return MigrationStockTable(tuple(countries), epochs, stocks, temp_arrays,
                               by_epoch(pops) if pops else {})


def serialize_migration_tables(table: MigrationStockTable) -> tuple[bytes, bytes, bytes]:
    """Render ``(stocks, temperatures, populations)`` CSV bytes."""
    def render(header, rows):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return out.getvalue().encode("utf-8")

    stock_rows = []
    for e in table.epochs:
        m = table.stocks[e]
        for i, j in zip(*np.nonzero(m)):
            stock_rows.append([e, table.countries[i], table.countries[j], _fmt(m[i, j])])

    def country_rows(d):
        rows = []
        for e in sorted(d):
            for i, v in enumerate(d[e]):
                if not np.isnan(v):
                    rows.append([table.countries[i], e, _fmt(v)])
        return rows

    return (render(STOCK_COLUMNS, stock_rows),
            render(TEMP_COLUMNS, country_rows(table.temps)),
            render(POP_COLUMNS, country_rows(table.populations)))
