"""ESRI-style ASCII grids, with or without the six-line header.

Rows in the file run north to south. A headerless file (as HYDE grids are
loaded by plain matrix readers) needs the caller to give its dimensions and
is assumed to cover the whole globe.
"""
from __future__ import annotations

import logging

import numpy as np

from ..raster import GridRaster, Orientation, reorient
from .textgrid import IngestError, format_rows, is_blank, open_binary, parse_rows

log = logging.getLogger(__name__)

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "xllcenter", "yllcorner", "yllcenter",
               "cellsize", "nodata_value")
BLOCK_LINES = 256


def _read_header(fh, source):
    """Consume header lines; return (header dict, first data line or None, lines read)."""
    header = {}
    lineno = 0
    while True:
        line = fh.readline()
        if not line:
            return header, None, lineno
        lineno += 1
        if is_blank(line):
            continue
        parts = line.split()
        key = parts[0].decode("ascii", errors="replace").lower()
        if key not in HEADER_KEYS:
            return header, line, lineno
        if len(parts) != 2:
            raise IngestError(f"malformed header line for {key!r}", source, lineno)
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise IngestError(f"unparseable header value {parts[1].decode(errors='replace')!r}",
                              source, lineno, line.index(parts[1]) + 1) from None


def parse_ascii_grid(source, nodata: float = -9999.0, expected_dims=None) -> GridRaster:
    """Parse an ASCII grid into a north-to-south :class:`GridRaster`.

    Parameters
    ----------
    source : bytes, str, path-like or binary file
        The grid text.
    nodata : float
        Sentinel marking missing cells; a ``NODATA_value`` header entry
        takes precedence.
    expected_dims : (n_rows, n_cols), optional
        Required for headerless files. Ignored (with a log message) when a
        header disagrees.
    """
    with open_binary(source) as (fh, name):
        header, first, lineno = _read_header(fh, name)
        if header:
            missing = [k for k in ("ncols", "nrows", "cellsize") if k not in header]
            if missing or not ({"xllcorner", "xllcenter"} & header.keys()) \
                    or not ({"yllcorner", "yllcenter"} & header.keys()):
                raise IngestError(f"incomplete header, missing {missing or 'corner'}", name, 1)
            n_rows, n_cols = int(header["nrows"]), int(header["ncols"])
            if expected_dims is not None and tuple(expected_dims) != (n_rows, n_cols):
                log.info("%s: header dims %dx%d override caller dims %s",
                         name, n_rows, n_cols, tuple(expected_dims))
            nodata = header.get("nodata_value", nodata)
        elif expected_dims is None:
            raise IngestError("headerless grid needs expected_dims", name)
        else:
            n_rows, n_cols = (int(d) for d in expected_dims)

        out = np.empty((n_rows, n_cols), dtype=np.float64)
        filled = 0
        block, numbers = [], []
        line = first
        while line is not None:
            if not is_blank(line):
                if filled + len(block) >= n_rows:
                    raise IngestError(f"expected {n_rows} rows, found more", name, lineno)
                block.append(line)
                numbers.append(lineno)
                if len(block) == BLOCK_LINES:
                    out[filled:filled + len(block)] = parse_rows(block, numbers, n_cols,
                                                                 np.float64, name)
                    filled += len(block)
                    block, numbers = [], []
            line = fh.readline() or None
            lineno += 1
        if block:
            out[filled:filled + len(block)] = parse_rows(block, numbers, n_cols, np.float64, name)
            filled += len(block)
        if filled != n_rows:
            raise IngestError(f"expected {n_rows} rows, found {filled}", name, lineno - 1)

    mask = out != nodata
    if header:
        cs = header["cellsize"]
        if "xllcorner" in header:
            origin_lon = header["xllcorner"] + cs / 2
        else:
            origin_lon = header["xllcenter"]
        if "yllcorner" in header:
            origin_lat = header["yllcorner"] + (n_rows - 0.5) * cs
        else:
            origin_lat = header["yllcenter"] + (n_rows - 1) * cs
        return GridRaster(out, mask, origin_lat, origin_lon, cs, Orientation.NORTH_TO_SOUTH)
    return GridRaster.from_array(out, mask, orientation=Orientation.NORTH_TO_SOUTH,
                                 cell_size=180.0 / n_rows)


def read_ascii_grid(path, nodata: float = -9999.0, expected_dims=None) -> GridRaster:
    return parse_ascii_grid(path, nodata=nodata, expected_dims=expected_dims)


def serialize_ascii_grid(grid: GridRaster, nodata: float = -9999.0, header: bool = True) -> bytes:
    """Render ``grid`` as ASCII grid text (north to south, 17 significant digits)."""
    g = reorient(grid, Orientation.NORTH_TO_SOUTH)
    if np.any(g.mask & (g.values == nodata)):
        raise ValueError(f"a valid cell holds the nodata sentinel {nodata!r}")
    body = format_rows(np.where(g.mask, g.values, nodata))
    if not header:
        return body
    cs = g.cell_size
    south_edge = g.origin_lat - (g.n_rows - 0.5) * cs
    head = (
        f"ncols {g.n_cols}\n"
        f"nrows {g.n_rows}\n"
        f"xllcorner {g.origin_lon - cs / 2!r}\n"
        f"yllcorner {south_edge!r}\n"
        f"cellsize {cs!r}\n"
        f"NODATA_value {nodata!r}\n"
    )
    return head.encode("ascii") + body


def write_ascii_grid(path, grid: GridRaster, nodata: float = -9999.0, header: bool = True) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_ascii_grid(grid, nodata, header))
