"""Urban heat island adjustment of population-weighted temperature.

City warming follows the power law ``U = alpha * P**beta`` in city
population. Cities are binned into the grid cell containing their point
coordinate; a cell's urban share is its city population over its total
population and its UHI is the city-population-weighted mean intensity.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .indices import (ChangeSeries, MaskPolicy, _additive_change, _check_epochs, _select,
                      _total, fisher_change, weighted_mean)
from .ingest.tables import CityTable
from .raster import GridRaster, SnapshotSeries, require_compatible
from .summation import fsum

log = logging.getLogger(__name__)

DEFAULT_UHI_ALPHA = 0.00174
DEFAULT_UHI_BETA = 0.45


@dataclass(frozen=True)
class UhiParams:
    alpha: float = DEFAULT_UHI_ALPHA
    beta: float = DEFAULT_UHI_BETA

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


def uhi_intensity(pop, params: UhiParams = UhiParams()):
    """Urban warming in degrees C for a city of ``pop`` inhabitants."""
    arr = np.asarray(pop, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("population must be non-negative")
    out = params.alpha * np.power(arr, params.beta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class UrbanGridEpoch:
    epoch: int
    urban_frac: GridRaster
    uhi: GridRaster
    cap_events: int = 0
    n_cities: int = 0


def build_urban_epoch(cities: CityTable, pop: GridRaster, epoch: int,
                      params: UhiParams = UhiParams()) -> UrbanGridEpoch:
    """Bin cities onto ``pop``'s grid for one epoch.

    Cities without an estimate for ``epoch`` are skipped. Where binned city
    population exceeds the cell's population it is capped and counted in
    ``cap_events``.
    """
    if epoch not in cities.epochs:
        raise KeyError(f"epoch {epoch} not in city table epochs {cities.epochs}")
    shape = pop.shape
    city_pop = np.zeros(shape)
    weighted_uhi = np.zeros(shape)
    rows, cols, sizes = [], [], []
    for rec in cities.records:
        p = rec.population(epoch)
        if p is None:
            continue
        r, c = pop.cell_index(rec.lat, rec.lon)
        rows.append(r)
        cols.append(c)
        sizes.append(p)
    n = len(sizes)
    if n:
        # fixed city order keeps the per-cell accumulation deterministic
        rows_a, cols_a = np.array(rows), np.array(cols)
        sizes_a = np.array(sizes, dtype=np.float64)
        np.add.at(city_pop, (rows_a, cols_a), sizes_a)
        np.add.at(weighted_uhi, (rows_a, cols_a), sizes_a * uhi_intensity(sizes_a, params))
    cell_pop = pop.filled(0.0)
    capped = np.minimum(city_pop, cell_pop)
    over = city_pop > cell_pop
    cap_events = int(np.count_nonzero(over))
    if cap_events:
        log.warning("epoch %d: urban population exceeds cell population in %d cell(s); capped",
                    epoch, cap_events)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(cell_pop > 0, capped / cell_pop, 0.0)
        uhi = np.where(city_pop > 0, weighted_uhi / city_pop, 0.0)
    everywhere = np.ones(shape, dtype=bool)
    return UrbanGridEpoch(epoch, pop.replace(values=frac, mask=everywhere),
                          pop.replace(values=uhi, mask=everywhere), cap_events, n)


def _urban_terms(temp, pop, urban, policy):
    """Columns T, U, nu and P over the cells selected by ``policy``."""
    (t, u, nu), w, _ = _select([temp, urban.uhi, urban.urban_frac], pop, policy)
    return t, u, nu, w


def uhi_adjusted_level(temps: GridRaster, pop: GridRaster, urban: UrbanGridEpoch,
                       policy=MaskPolicy.STRICT) -> float:
    """Population-weighted mean temperature with urban dwellers warmed by U."""
    require_compatible(temps, pop, urban.uhi, urban.urban_frac)
    _, u, nu, w = _urban_terms(temps, pop, urban, policy)
    return weighted_mean(temps, pop, policy) + fsum(u * w * nu) / _total(w)


def urban_share(pop: GridRaster, urban: UrbanGridEpoch, policy=MaskPolicy.STRICT) -> float:
    """Fraction of (gridded) population living in binned cities."""
    (nu,), w, _ = _select([urban.urban_frac], pop, policy)
    return fsum(w * nu) / _total(w)


def mean_urban_uhi(pop: GridRaster, urban: UrbanGridEpoch, policy=MaskPolicy.STRICT) -> float:
    """Average UHI over urban dwellers; 0 when nobody is urban."""
    (u, nu), w, _ = _select([urban.uhi, urban.urban_frac], pop, policy)
    den = fsum(w * nu)
    return fsum(u * w * nu) / den if den > 0 else 0.0


def _uhi_change(t0, t1, weight, urban_w, u0, u1, policy):
    """Base change plus share-weighted UHI change, both with frozen weights.

    Returns (base, share, uhi_index_change, uhi_component).
    """
    (v0, v1, uu0, uu1, nu), w, _ = _select([t0, t1, u0, u1, urban_w.urban_frac], weight,
                                           policy)
    den = _total(w)
    base = fsum(np.concatenate([v1 * w, -(v0 * w)])) / den
    urban_w_col = w * nu
    urban_total = fsum(urban_w_col)
    share = urban_total / den
    if urban_total > 0:
        d_u = fsum(np.concatenate([uu1 * urban_w_col, -(uu0 * urban_w_col)])) / urban_total
    else:
        d_u = 0.0
    return base, share, d_u, share * d_u


class UhiChanges(NamedTuple):
    adjusted: ChangeSeries
    base: ChangeSeries
    uhi_component: ChangeSeries
    urban_share: dict


def uhi_adjusted_changes(temps: SnapshotSeries, pops: SnapshotSeries,
                         urban: Mapping[int, UrbanGridEpoch], method: str = "fisher",
                         policy=MaskPolicy.STRICT) -> UhiChanges:
    """Chained index changes with and without the urban heat island term.

    For each transition whose two epochs both have urban data, the adjusted
    change is the base change plus the urban share (at the weighting
    epoch) times the change in the urban-population-weighted UHI. Other
    transitions carry the unadjusted change. Fisher averages the Laspeyres
    and Paasche forms of each piece.
    """
    _check_epochs(temps, pops)
    if method not in ("laspeyres", "paasche", "fisher"):
        raise ValueError(f"unknown index method {method!r}")
    extra = set(urban) - set(temps.epochs)
    if extra:
        raise ValueError(f"urban epochs {sorted(extra)} not among index epochs {temps.epochs}")
    t, p, ep = temps.grids, pops.grids, temps.epochs
    adjusted, base, comp = [], [], []
    for i in range(len(ep) - 1):
        a, b = ep[i], ep[i + 1]
        if a in urban and b in urban:
            u0, u1 = urban[a].uhi, urban[b].uhi
            bl, _, _, cl = _uhi_change(t[i], t[i + 1], p[i], urban[a], u0, u1, policy)
            bp, _, _, cp = _uhi_change(t[i], t[i + 1], p[i + 1], urban[b], u0, u1, policy)
        else:
            bl, _ = _additive_change(t[i], t[i + 1], p[i], policy)
            bp, _ = _additive_change(t[i], t[i + 1], p[i + 1], policy)
            cl = cp = 0.0
        if method == "laspeyres":
            bb, cc = bl, cl
        elif method == "paasche":
            bb, cc = bp, cp
        else:
            bb, cc = fisher_change(bl, bp), fisher_change(cl, cp)
        base.append(bb)
        comp.append(cc)
        adjusted.append(bb + cc)
    shares = {e: urban_share(pops[e], urban[e], policy) for e in ep if e in urban}
    return UhiChanges(ChangeSeries(ep, adjusted, f"uhi_{method}", policy),
                      ChangeSeries(ep, base, method, policy),
                      ChangeSeries(ep, comp, f"uhi_component_{method}", policy),
                      shares)


def build_urban_epochs(cities: CityTable, pops: SnapshotSeries,
                       params: UhiParams = UhiParams(), start: int | None = None) -> dict:
    """Urban grids for every population epoch the city table covers (from ``start`` on)."""
    out = {}
    for e, g in pops:
        if e in cities.epochs and (start is None or e >= start):
            out[e] = build_urban_epoch(cities, g, e, params)
    return out
