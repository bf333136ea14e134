"""Grid data model and grid-level statistics.

A :class:`GridRaster` is a regular lat/lon field with an explicit validity
mask. Operations here never look at the stored number of an invalid cell;
derived grids store NaN there so accidental use is loud.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .summation import StackAccumulator, stack_sum

GEOMETRY_TOL = 1e-9


class GeometryError(ValueError):
    """Grids that should line up do not."""


class OrientationError(GeometryError):
    """Grids share a shape but have opposite row order."""


class Orientation(str, enum.Enum):
    NORTH_TO_SOUTH = "north-to-south"
    SOUTH_TO_NORTH = "south-to-north"

    def flipped(self) -> "Orientation":
        if self is Orientation.NORTH_TO_SOUTH:
            return Orientation.SOUTH_TO_NORTH
        return Orientation.NORTH_TO_SOUTH


CANONICAL_ORIENTATION = Orientation.SOUTH_TO_NORTH


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridRaster:
    """Rectangular lat x lon field.

    Parameters
    ----------
    values : array_like
        ``(n_rows, n_cols)`` cell values.
    mask : array_like of bool
        True where the cell holds a valid datum.
    origin_lat, origin_lon : float
        Centre of cell ``(0, 0)`` in degrees.
    cell_size : float
        Cell edge length in degrees.
    orientation : Orientation
        Whether row 0 is the northernmost or southernmost row.
    """

    values: np.ndarray
    mask: np.ndarray
    origin_lat: float
    origin_lon: float
    cell_size: float
    orientation: Orientation = CANONICAL_ORIENTATION

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2:
            raise GeometryError(f"grid values must be 2-D, got shape {values.shape}")
        if mask.shape != values.shape:
            raise GeometryError(
                f"mask shape {mask.shape} differs from values shape {values.shape}"
            )
        if not self.cell_size > 0:
            raise GeometryError(f"cell_size must be positive, got {self.cell_size}")
        n_rows, n_cols = values.shape
        if n_rows * self.cell_size > 180 + 1e-6 or n_cols * self.cell_size > 360 + 1e-6:
            raise GeometryError(
                f"{n_rows}x{n_cols} cells of {self.cell_size} deg exceed the globe"
            )
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "mask", _readonly(mask))
        object.__setattr__(self, "origin_lat", float(self.origin_lat))
        object.__setattr__(self, "origin_lon", float(self.origin_lon))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        object.__setattr__(self, "orientation", Orientation(self.orientation))

    @classmethod
    def from_array(cls, values, mask=None, *, cell_size=None,
                   orientation=CANONICAL_ORIENTATION, origin_lat=None, origin_lon=None):
        """Build a grid, defaulting to a global layout.

        With no geometry given the grid is assumed to span the whole globe,
        so ``cell_size = 180 / n_rows``. NaNs in ``values`` are masked when
        no mask is supplied.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[np.newaxis, :]
        if mask is None:
            mask = np.isfinite(values)
        n_rows, n_cols = values.shape
        if cell_size is None:
            cell_size = 180.0 / max(n_rows, n_cols / 2)
        orientation = Orientation(orientation)
        if origin_lat is None:
            half = cell_size / 2
            origin_lat = -90 + half if orientation is Orientation.SOUTH_TO_NORTH else 90 - half
        if origin_lon is None:
            origin_lon = -180 + cell_size / 2
        return cls(values, mask, origin_lat, origin_lon, cell_size, orientation)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Values with invalid cells replaced by ``fill``."""
        return np.where(self.mask, self.values, fill)

    def row_latitudes(self) -> np.ndarray:
        step = self.cell_size if self.orientation is Orientation.SOUTH_TO_NORTH else -self.cell_size
        return self.origin_lat + step * np.arange(self.n_rows)

    def col_longitudes(self) -> np.ndarray:
        return self.origin_lon + self.cell_size * np.arange(self.n_cols)

    def replace(self, **changes) -> "GridRaster":
        kw = dict(values=self.values, mask=self.mask, origin_lat=self.origin_lat,
                  origin_lon=self.origin_lon, cell_size=self.cell_size,
                  orientation=self.orientation)
        kw.update(changes)
        return GridRaster(**kw)

    def same_geometry(self, other: "GridRaster", tol: float = GEOMETRY_TOL) -> bool:
        return (
            self.shape == other.shape
            and self.orientation == other.orientation
            and abs(self.cell_size - other.cell_size) <= tol
            and abs(self.origin_lat - other.origin_lat) <= tol
            and abs(self.origin_lon - other.origin_lon) <= tol
        )

    def identical(self, other: "GridRaster") -> bool:
        """Exact equality of values, mask and metadata (NaN equals NaN)."""
        return (
            self.orientation == other.orientation
            and self.origin_lat == other.origin_lat
            and self.origin_lon == other.origin_lon
            and self.cell_size == other.cell_size
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def cell_index(self, lat: float, lon: float) -> tuple[int, int]:
        """Row and column of the cell containing the point ``(lat, lon)``.

        Points on the outer edge of the grid fall into the adjacent cell.
        Longitudes wrap when the grid spans the full circle.
        """
        cs = self.cell_size
        eps = 1e-9
        lats = self.row_latitudes()
        south, north = lats.min() - cs / 2, lats.max() + cs / 2
        west = self.origin_lon - cs / 2
        east = west + self.n_cols * cs
        if abs(self.n_cols * cs - 360) <= 1e-6:
            lon = west + (lon - west) % 360.0
        if not (south - eps <= lat <= north + eps and west - eps <= lon <= east + eps):
            raise GeometryError(f"point ({lat}, {lon}) lies outside the grid")
        if self.orientation is Orientation.SOUTH_TO_NORTH:
            r = math.floor((lat - south) / cs)
        else:
            r = math.floor((north - lat) / cs)
        c = math.floor((lon - west) / cs)
        return min(max(r, 0), self.n_rows - 1), min(max(c, 0), self.n_cols - 1)


def require_compatible(*grids: GridRaster) -> None:
    """Raise unless all grids share shape, origin, cell size and orientation."""
    first = grids[0]
    for g in grids[1:]:
        if g.shape == first.shape and g.orientation != first.orientation:
            raise OrientationError(
                f"orientation mismatch: {first.orientation.value} vs {g.orientation.value}"
            )
        if not first.same_geometry(g):
            raise GeometryError(
                "geometry mismatch: "
                f"{first.shape}@({first.origin_lat}, {first.origin_lon}, {first.cell_size}) vs "
                f"{g.shape}@({g.origin_lat}, {g.origin_lon}, {g.cell_size})"
            )


@dataclass(frozen=True)
class SnapshotSeries:
    """Grids on a common geometry, one per (strictly increasing) epoch year."""

    epochs: tuple
    grids: tuple

    def __post_init__(self):
        epochs = tuple(int(e) for e in self.epochs)
        grids = tuple(self.grids)
        if len(epochs) != len(grids) or not epochs:
            raise ValueError(
                f"need one grid per epoch and at least one epoch, got "
                f"{len(epochs)} epochs and {len(grids)} grids"
            )
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError(f"epochs must be strictly increasing: {epochs}")
        require_compatible(*grids)
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "grids", grids)

    def __len__(self) -> int:
        return len(self.epochs)

    def __iter__(self):
        return iter(zip(self.epochs, self.grids))

    def __getitem__(self, year: int) -> GridRaster:
        try:
            return self.grids[self.epochs.index(int(year))]
        except ValueError:
            raise KeyError(f"epoch {year} not in series {self.epochs}") from None

    def select(self, years: Iterable[int]) -> "SnapshotSeries":
        years = list(years)
        return SnapshotSeries(years, [self[y] for y in years])

    def map(self, fn) -> "SnapshotSeries":
        return SnapshotSeries(self.epochs, [fn(g) for g in self.grids])

    @property
    def template(self) -> GridRaster:
        return self.grids[0]


@dataclass(frozen=True)
class MonthlyArchive:
    """Twelve grids per year, ordered (year, month)."""

    start_year: int
    n_years: int
    grids: tuple

    def __post_init__(self):
        grids = tuple(self.grids)
        if len(grids) != 12 * self.n_years:
            raise ValueError(
                f"expected {12 * self.n_years} monthly grids for {self.n_years} years, "
                f"got {len(grids)}"
            )
        if grids:
            require_compatible(*grids)
        object.__setattr__(self, "grids", grids)

    @property
    def years(self) -> range:
        return range(self.start_year, self.start_year + self.n_years)

    def months(self, year: int) -> tuple:
        i = year - self.start_year
        if not 0 <= i < self.n_years:
            raise KeyError(f"year {year} not in archive {self.years}")
        return self.grids[12 * i:12 * i + 12]


def aggregate_blocks(fine: GridRaster, factor: int, reducer: str = "sum") -> GridRaster:
    """Aggregate ``factor x factor`` blocks of a fine grid into coarse cells.

    ``sum`` treats invalid fine cells as contributing zero (counts are
    extensive); ``mean`` averages the valid fine cells only. A coarse cell is
    valid iff at least one fine cell of its block is.
    """
    if factor < 1:
        raise ValueError(f"aggregation factor must be >= 1, got {factor}")
    if reducer not in ("sum", "mean"):
        raise ValueError(f"unknown reducer {reducer!r}")
    n_rows, n_cols = fine.shape
    if n_rows % factor or n_cols % factor:
        raise GeometryError(f"grid {n_rows}x{n_cols} is not divisible by factor {factor}")
    out_shape = (n_rows // factor, n_cols // factor)
    filled = fine.filled(0.0)
    total = StackAccumulator(out_shape)
    count = np.zeros(out_shape, dtype=np.int64)
    for k in range(factor):
        for l in range(factor):
            total.add(filled[k::factor, l::factor])
            count += fine.mask[k::factor, l::factor]
    mask = count > 0
    values = total.result()
    if reducer == "mean":
        with np.errstate(invalid="ignore", divide="ignore"):
            values = values / count
    values[~mask] = np.nan

    cs = fine.cell_size
    shift = (cs * factor - cs) / 2
    if fine.orientation is Orientation.NORTH_TO_SOUTH:
        origin_lat = fine.origin_lat - shift
    else:
        origin_lat = fine.origin_lat + shift
    return GridRaster(values, mask, origin_lat, fine.origin_lon + shift, cs * factor,
                      fine.orientation)


def reorient(g: GridRaster, target) -> GridRaster:
    """Return ``g`` with rows ordered per ``target`` orientation."""
    target = Orientation(target)
    if g.orientation is target:
        return g
    last_lat = g.row_latitudes()[-1] if g.n_rows else g.origin_lat
    return GridRaster(g.values[::-1], g.mask[::-1], last_lat, g.origin_lon, g.cell_size, target)


def annual_mean(months: Sequence[GridRaster]) -> GridRaster:
    """Mean of twelve monthly grids; one invalid month invalidates the cell."""
    if len(months) != 12:
        raise ValueError(f"need 12 monthly grids, got {len(months)}")
    require_compatible(*months)
    first = months[0]
    mask = np.logical_and.reduce([m.mask for m in months])
    total = stack_sum((m.filled(0.0) for m in months), shape=first.shape)
    values = total / 12.0
    values[~mask] = np.nan
    return first.replace(values=values, mask=mask)


def monthly_to_annual(archive: MonthlyArchive) -> SnapshotSeries:
    if archive.n_years < 1:
        raise ValueError("monthly archive is empty")
    years = list(archive.years)
    return SnapshotSeries(years, [annual_mean(archive.months(y)) for y in years])


def centered_mean(annual: SnapshotSeries, center_years: Sequence[int], window: int) -> SnapshotSeries:
    """Per-cell mean over ``window`` years centred on each of ``center_years``.

    Windows reaching outside the available years are rejected, never
    truncated. A cell is invalid if any contributing year is invalid there.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"centred window must be a positive odd number, got {window}")
    half = (window - 1) // 2
    available = set(annual.epochs)
    grids = []
    for c in center_years:
        years = range(c - half, c + half + 1)
        missing = [y for y in years if y not in available]
        if missing:
            raise ValueError(
                f"{window}-year window centred on {c} needs {years.start}-{years.stop - 1} "
                f"but years {missing[0]}..{missing[-1]} are not available "
                f"(have {annual.epochs[0]}-{annual.epochs[-1]})"
            )
        members = [annual[y] for y in years]
        mask = np.logical_and.reduce([m.mask for m in members])
        values = stack_sum((m.filled(0.0) for m in members), shape=annual.template.shape) / window
        values[~mask] = np.nan
        grids.append(annual.template.replace(values=values, mask=mask))
    return SnapshotSeries(list(center_years), grids)


def convert_units(g: GridRaster, scale: float, offset: float) -> GridRaster:
    """Affine unit change ``v * scale + offset`` on valid cells."""
    values = g.values * scale + offset
    values[~g.mask] = np.nan
    return g.replace(values=values)
