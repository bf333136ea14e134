"""Temperature change experienced by international migrants.

Flows between two epochs are taken as the positive part of the change in
origin-destination migrant stocks. A migrant moving from ``o`` to ``d``
experiences ``T[d, t+1] - T[o, t]``; the flow-weighted mean of that, times
the share of the world population migrating, is the adjustment to the
population-weighted temperature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ingest.tables import MigrationMatrix, MigrationStockTable
from .summation import fsum


class CountrySetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FlowMatrix:
    epoch_from: int
    epoch_to: int
    countries: tuple
    flows: np.ndarray
    temps_from: np.ndarray
    temps_to: np.ndarray
    clamped_total: float = 0.0

    @property
    def total(self) -> float:
        return fsum(self.flows)


@dataclass(frozen=True)
class HistogramBin:
    lower: float
    upper: float
    count: float
    share: float


@dataclass(frozen=True)
class Histogram:
    bins: tuple
    total: float
    share_within_2: float = math.nan
    share_beyond_10: float = math.nan
    share_cooling: float = math.nan


@dataclass(frozen=True)
class MigrationSummary:
    epoch_from: int
    epoch_to: int
    total_migrants: float
    mean_delta: float | None
    world_pop: float
    migrant_share: float
    adjustment: float
    clamped_total: float
    histogram: Histogram = field(default=None)


def stocks_to_flows(stock_from: MigrationMatrix, stock_to: MigrationMatrix) -> FlowMatrix:
    """Positive stock increases between two epochs; decreases are clamped to 0."""
    if stock_from.countries != stock_to.countries:
        a, b = set(stock_from.countries), set(stock_to.countries)
        raise CountrySetMismatch(
            f"country sets differ between {stock_from.epoch} and {stock_to.epoch}: "
            f"only in first {sorted(a - b)}, only in second {sorted(b - a)}"
        )
    change = stock_to.stocks - stock_from.stocks
    flows = np.maximum(change, 0.0)
    clamped = fsum(np.maximum(-change, 0.0))
    return FlowMatrix(stock_from.epoch, stock_to.epoch, stock_from.countries, flows,
                      stock_from.temps, stock_to.temps, clamped)


def flow_deltas(flows: FlowMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Experienced change and migrant count for every nonzero flow."""
    o, d = np.nonzero(flows.flows)
    return flows.temps_to[d] - flows.temps_from[o], flows.flows[o, d]


def stock_deltas(matrix: MigrationMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Destination minus origin temperature at the same epoch, per nonzero stock."""
    o, d = np.nonzero(matrix.stocks)
    return matrix.temps[d] - matrix.temps[o], matrix.stocks[o, d]


def migration_delta(flows: FlowMatrix) -> float | None:
    """Flow-weighted mean experienced temperature change, None without migrants."""
    deltas, counts = flow_deltas(flows)
    total = fsum(counts)
    if not total > 0:
        return None
    return fsum(deltas * counts) / total


def migration_adjustment(delta: float | None, total_migrants: float, world_pop: float) -> float:
    if not world_pop > 0:
        raise ValueError(f"world population must be positive, got {world_pop}")
    if delta is None or total_migrants == 0:
        return 0.0
    return delta * (total_migrants / world_pop)


def experienced_histogram(deltas, counts, bin_width: float = 1.0) -> Histogram:
    """Migrant counts binned by experienced temperature change.

    Bins are ``[k * bin_width, (k + 1) * bin_width)`` and run contiguously
    from the lowest to the highest occupied bin.
    """
    if not bin_width > 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    deltas = np.asarray(deltas, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    keep = counts > 0
    deltas, counts = deltas[keep], counts[keep]
    total = fsum(counts)
    if deltas.size == 0 or total == 0:
        return Histogram((), 0.0)
    k = np.floor(deltas / bin_width).astype(np.int64)
    lo, hi = int(k.min()), int(k.max())
    bins = []
    for j in range(lo, hi + 1):
        c = fsum(counts[k == j])
        bins.append(HistogramBin(j * bin_width, (j + 1) * bin_width, c, c / total))
    return Histogram(
        tuple(bins), total,
        share_within_2=fsum(counts[np.abs(deltas) <= 2.0]) / total,
        share_beyond_10=fsum(counts[np.abs(deltas) >= 10.0]) / total,
        share_cooling=fsum(counts[deltas < 0]) / total,
    )


def summarize_transition(table: MigrationStockTable, epoch_from: int, epoch_to: int,
                         bin_width: float = 1.0) -> MigrationSummary:
    flows = stocks_to_flows(table.matrix(epoch_from), table.matrix(epoch_to))
    delta = migration_delta(flows)
    total = flows.total
    world = table.world_population(epoch_to)
    share = total / world
    deltas, counts = flow_deltas(flows)
    return MigrationSummary(epoch_from, epoch_to, total, delta, world, share,
                            migration_adjustment(delta, total, world), flows.clamped_total,
                            experienced_histogram(deltas, counts, bin_width))
