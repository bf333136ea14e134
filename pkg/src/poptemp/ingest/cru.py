"""CRU-style monthly ``.dat`` archives.

One latitude band per line, south to north, ``n_cols`` integer fields in
tenths of a degree Celsius, ``-999`` for missing. Lines are ordered year,
then month, then latitude band, i.e. zero-based line
``l + m * n_lat + y * n_lat * 12``.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..raster import GridRaster, MonthlyArchive, Orientation
from .textgrid import IngestError, format_int_rows, is_blank, open_binary, parse_rows

CRU_NODATA = -999


def _grid_geometry(n_lat, n_cols, cell_size):
    cs = 180.0 / n_lat if cell_size is None else cell_size
    return dict(origin_lat=-90 + cs / 2, origin_lon=-180 + cs / 2, cell_size=cs,
                orientation=Orientation.SOUTH_TO_NORTH)


def iter_cru_years(source, n_lat: int, n_cols: int, start_year: int, n_years: int,
                   cell_size: float | None = None, nodata: int = CRU_NODATA
                   ) -> Iterator[tuple[int, list[GridRaster]]]:
    """Stream ``(year, [12 monthly grids])`` from a CRU-style archive.

    Only one year of text and grids is held at a time.
    """
    geom = _grid_geometry(n_lat, n_cols, cell_size)
    per_year = 12 * n_lat
    expected = per_year * n_years
    with open_binary(source) as (fh, name):
        lineno = 0
        rows_seen = 0
        for y in range(n_years):
            block, numbers = [], []
            while len(block) < per_year:
                line = fh.readline()
                if not line:
                    raise IngestError(
                        f"row-count mismatch: expected {expected} rows, found {rows_seen + len(block)}",
                        name, lineno,
                    )
                lineno += 1
                if is_blank(line):
                    continue
                block.append(line)
                numbers.append(lineno)
            rows_seen += len(block)
            data = parse_rows(block, numbers, n_cols, np.int64, name).reshape(12, n_lat, n_cols)
            months = [
                GridRaster(data[m].astype(np.float64), data[m] != nodata, **geom)
                for m in range(12)
            ]
            yield start_year + y, months
        extra = sum(1 for line in fh if not is_blank(line))
        if extra:
            raise IngestError(
                f"row-count mismatch: expected {expected} rows, found {expected + extra}",
                name, lineno + 1,
            )


def parse_cru_dat(source, n_lat: int, n_cols: int, start_year: int, n_years: int,
                  cell_size: float | None = None) -> MonthlyArchive:
    """Read a whole archive into memory. Values stay in tenths of a degree."""
    grids = []
    for _, months in iter_cru_years(source, n_lat, n_cols, start_year, n_years, cell_size):
        grids.extend(months)
    return MonthlyArchive(start_year, n_years, grids)


def serialize_cru_year(months, nodata: int = CRU_NODATA) -> bytes:
    """Render twelve south-to-north monthly grids as CRU-style lines."""
    rows = []
    for g in months:
        if g.orientation is not Orientation.SOUTH_TO_NORTH:
            raise ValueError("CRU layout requires south-to-north grids")
        vals = np.where(g.mask, g.values, nodata)
        if not np.all(vals == np.round(vals)):
            raise ValueError("CRU fields must be integral (tenths of a degree)")
        rows.append(vals.astype(np.int64))
    return format_int_rows(np.concatenate(rows, axis=0))


def serialize_cru_dat(archive: MonthlyArchive, nodata: int = CRU_NODATA) -> bytes:
    return b"".join(
        serialize_cru_year(archive.months(y), nodata) for y in archive.years
    )
