"""Area- and population-weighted temperature indices.

Levels are weighted means of gridded temperature. Changes between
consecutive epochs follow the additive Laspeyres (start-of-period weights)
and Paasche (end-of-period weights) forms; the Fisher change is their
arithmetic mean. Chained levels are cumulative sums of changes.

Every weighted operation takes a :class:`MaskPolicy`:

``strict``
    A cell contributes only if the temperature(s) *and* the weight are valid;
    denominators cover the contributing cells only. The fraction of valid
    weight that had to be dropped is reported.
``paper_compat``
    Invalid temperatures and weights are replaced by zero and denominators
    run over every weight, reproducing the original zero-fill workflow.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .raster import GridRaster, SnapshotSeries, require_compatible
from .summation import fsum


class MaskPolicy(str, enum.Enum):
    STRICT = "strict"
    PAPER_COMPAT = "paper_compat"


class ZeroWeightError(ValueError):
    """The selected cells carry no weight."""


class EpochMismatchError(ValueError):
    pass


LEVEL = "level"
ANOMALY = "anomaly"
METHODS = ("area", "naive_pop", "laspeyres_fixed", "paasche_fixed", "laspeyres_chained",
           "paasche_chained", "fisher_chained", "uhi_adjusted", "migration_adjusted")
CHANGE_METHODS = ("laspeyres", "paasche", "fisher")


@dataclass(frozen=True)
class IndexSeries:
    epochs: tuple
    values: np.ndarray
    kind: str
    method: str
    base_epoch: int
    policy: MaskPolicy = MaskPolicy.STRICT
    excluded_weight: np.ndarray | None = None

    def __post_init__(self):
        epochs = tuple(int(e) for e in self.epochs)
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (len(epochs),):
            raise ValueError(f"{len(epochs)} epochs but {values.shape} values")
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "policy", MaskPolicy(self.policy))

    def __getitem__(self, epoch: int) -> float:
        return float(self.values[self.epochs.index(epoch)])

    def as_dict(self) -> dict:
        return dict(zip(self.epochs, self.values.tolist()))


@dataclass(frozen=True)
class ChangeSeries:
    """Per-transition changes; ``deltas[i]`` runs from ``epochs[i]`` to ``epochs[i+1]``."""

    epochs: tuple
    deltas: np.ndarray
    method: str = ""
    policy: MaskPolicy = MaskPolicy.STRICT
    excluded_weight: np.ndarray | None = None

    def __post_init__(self):
        epochs = tuple(int(e) for e in self.epochs)
        deltas = np.array(self.deltas, dtype=np.float64)
        if deltas.shape != (max(len(epochs) - 1, 0),):
            raise ValueError(f"{len(epochs)} epochs need {len(epochs) - 1} deltas, "
                             f"got {deltas.shape}")
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "policy", MaskPolicy(self.policy))

    @property
    def transitions(self) -> list:
        return list(zip(self.epochs, self.epochs[1:]))


class WeightedMean(NamedTuple):
    value: float
    total_weight: float
    excluded_weight: float


class Decomposition(NamedTuple):
    total: float
    pure_temp: float
    composition: float
    residual: float


# --------------------------------------------------------------------------
# cell selection


def _select(values: Sequence[GridRaster], weight: GridRaster, policy) -> tuple[list, np.ndarray, float]:
    """Return the value columns, the weight column and the excluded weight fraction."""
    policy = MaskPolicy(policy)
    require_compatible(*values, weight)
    if policy is MaskPolicy.PAPER_COMPAT:
        return [v.filled(0.0) for v in values], weight.filled(0.0), 0.0
    sel = weight.mask.copy()
    for v in values:
        sel &= v.mask
    w = weight.values[sel]
    available = fsum(weight.values[weight.mask])
    used = fsum(w)
    excluded = (available - used) / available if available > 0 else 0.0
    return [v.values[sel] for v in values], w, excluded


def _total(w: np.ndarray) -> float:
    den = fsum(w)
    if not den > 0:
        raise ZeroWeightError(f"total weight over selected cells is {den}")
    return den


def weighted_stats(value: GridRaster, weight: GridRaster, policy=MaskPolicy.STRICT) -> WeightedMean:
    (v,), w, excluded = _select([value], weight, policy)
    den = _total(w)
    return WeightedMean(fsum(v * w) / den, den, excluded)


def weighted_mean(value: GridRaster, weight: GridRaster, policy=MaskPolicy.STRICT) -> float:
    """Weighted mean ``sum(v*w) / sum(w)`` over the cells selected by ``policy``."""
    return weighted_stats(value, weight, policy).value


def _additive_change(t0, t1, weight, policy) -> tuple[float, float]:
    (v0, v1), w, excluded = _select([t0, t1], weight, policy)
    den = _total(w)
    num = fsum(np.concatenate([v1 * w, -(v0 * w)]))
    return num / den, excluded


def laspeyres_change(t0: GridRaster, t1: GridRaster, p0: GridRaster,
                     policy=MaskPolicy.STRICT) -> float:
    """Change from ``t0`` to ``t1`` weighted by start-of-period population ``p0``."""
    return _additive_change(t0, t1, p0, policy)[0]


def paasche_change(t0: GridRaster, t1: GridRaster, p1: GridRaster,
                   policy=MaskPolicy.STRICT) -> float:
    """Change from ``t0`` to ``t1`` weighted by end-of-period population ``p1``."""
    return _additive_change(t0, t1, p1, policy)[0]


def fisher_change(laspeyres: float, paasche: float) -> float:
    if not (math.isfinite(laspeyres) and math.isfinite(paasche)):
        raise ValueError(f"non-finite index change: L={laspeyres}, P={paasche}")
    return 0.5 * (laspeyres + paasche)


# --------------------------------------------------------------------------
# series


def _check_epochs(temps: SnapshotSeries, pops: SnapshotSeries):
    if temps.epochs != pops.epochs:
        raise EpochMismatchError(f"temperature epochs {temps.epochs} != population epochs "
                                 f"{pops.epochs}")


def area_series(temps: SnapshotSeries, area: GridRaster, policy=MaskPolicy.STRICT) -> IndexSeries:
    stats = [weighted_stats(t, area, policy) for t in temps.grids]
    return IndexSeries(temps.epochs, [s.value for s in stats], LEVEL, "area", temps.epochs[0],
                       policy, np.array([s.excluded_weight for s in stats]))


def naive_pop_series(temps: SnapshotSeries, pops: SnapshotSeries,
                     policy=MaskPolicy.STRICT) -> IndexSeries:
    """Weighted mean of each epoch's temperature by that epoch's population."""
    _check_epochs(temps, pops)
    stats = [weighted_stats(t, p, policy) for t, p in zip(temps.grids, pops.grids)]
    return IndexSeries(temps.epochs, [s.value for s in stats], LEVEL, "naive_pop",
                       temps.epochs[0], policy, np.array([s.excluded_weight for s in stats]))


def fixed_base_series(temps: SnapshotSeries, pops: SnapshotSeries, which_epoch: str = "first",
                      policy=MaskPolicy.STRICT) -> IndexSeries:
    """Every epoch's temperature weighted by one frozen population grid.

    ``which_epoch="first"`` gives the fixed-base Laspeyres series,
    ``"last"`` the fixed-base Paasche series.
    """
    _check_epochs(temps, pops)
    if which_epoch == "first":
        weight, method = pops.grids[0], "laspeyres_fixed"
    elif which_epoch == "last":
        weight, method = pops.grids[-1], "paasche_fixed"
    else:
        raise ValueError(f"which_epoch must be 'first' or 'last', got {which_epoch!r}")
    stats = [weighted_stats(t, weight, policy) for t in temps.grids]
    return IndexSeries(temps.epochs, [s.value for s in stats], LEVEL, method, temps.epochs[0],
                       policy, np.array([s.excluded_weight for s in stats]))


def chained_changes(temps: SnapshotSeries, pops: SnapshotSeries, method: str = "fisher",
                    policy=MaskPolicy.STRICT) -> ChangeSeries:
    """Per-transition chained index changes."""
    _check_epochs(temps, pops)
    if method not in CHANGE_METHODS:
        raise ValueError(f"unknown index method {method!r}")
    deltas, excluded = [], []
    t, p = temps.grids, pops.grids
    for i in range(len(t) - 1):
        lasp, ex_l = _additive_change(t[i], t[i + 1], p[i], policy)
        paas, ex_p = _additive_change(t[i], t[i + 1], p[i + 1], policy)
        if method == "laspeyres":
            deltas.append(lasp)
            excluded.append(ex_l)
        elif method == "paasche":
            deltas.append(paas)
            excluded.append(ex_p)
        else:
            deltas.append(fisher_change(lasp, paas))
            excluded.append(max(ex_l, ex_p))
    return ChangeSeries(temps.epochs, deltas, method, policy, np.array(excluded))


def diff(series: IndexSeries) -> ChangeSeries:
    return ChangeSeries(series.epochs, np.diff(series.values), series.method, series.policy)


def chain(changes: ChangeSeries, base_value: float = 0.0, kind: str | None = None) -> IndexSeries:
    """Accumulate changes from ``base_value`` at the first epoch."""
    values = [float(base_value)]
    for d in changes.deltas.tolist():
        values.append(values[-1] + d)
    if kind is None:
        kind = ANOMALY if base_value == 0 else LEVEL
    method = f"{changes.method}_chained" if changes.method in CHANGE_METHODS else changes.method
    return IndexSeries(changes.epochs, values, kind, method, changes.epochs[0], changes.policy)


def chained_series(temps: SnapshotSeries, pops: SnapshotSeries, method: str = "fisher",
                   policy=MaskPolicy.STRICT) -> IndexSeries:
    changes = chained_changes(temps, pops, method, policy)
    series = chain(changes, 0.0)
    return IndexSeries(series.epochs, series.values, series.kind, series.method,
                       series.base_epoch, policy, changes.excluded_weight)


def rebase_anomaly(series: IndexSeries, base_epoch: int) -> IndexSeries:
    """Subtract the value at ``base_epoch``; the result is exactly 0 there."""
    if base_epoch not in series.epochs:
        raise KeyError(f"base epoch {base_epoch} not in series epochs {series.epochs}")
    base = series.values[series.epochs.index(base_epoch)]
    return IndexSeries(series.epochs, series.values - base, ANOMALY, series.method, base_epoch,
                       series.policy, series.excluded_weight)


def conflation_decomposition(t0: GridRaster, t1: GridRaster, p0: GridRaster, p1: GridRaster,
                             policy=MaskPolicy.STRICT) -> Decomposition:
    """Split the naive population-weighted change into temperature and composition parts.

    ``total = pure_temp + composition + residual``, where ``pure_temp`` holds
    shares at the start, ``composition`` holds temperature at the start and
    ``residual`` is the cross term. Under ``strict`` all four grids must be
    valid in a cell for it to count.
    """
    if MaskPolicy(policy) is MaskPolicy.STRICT:
        require_compatible(t0, t1, p0, p1)
        sel = t0.mask & t1.mask & p0.mask & p1.mask
        v0, v1, w0, w1 = (g.values[sel] for g in (t0, t1, p0, p1))
    else:
        (v0, v1), w0, _ = _select([t0, t1], p0, policy)
        w1 = p1.filled(0.0)
        require_compatible(t0, p1)
    s0 = w0 / _total(w0)
    s1 = w1 / _total(w1)
    total = fsum(v1 * w1) / fsum(w1) - fsum(v0 * w0) / fsum(w0)
    pure = fsum((v1 - v0) * s0)
    composition = fsum(v0 * (s1 - s0))
    return Decomposition(total, pure, composition, total - pure - composition)


# --------------------------------------------------------------------------
# the full set of series


@dataclass
class IndexSuite:
    """All population/area series for one run, as anomalies from ``base_epoch``."""

    series: dict
    changes: dict
    decompositions: list
    base_epoch: int
    policy: MaskPolicy
    excluded_pop: np.ndarray = field(default=None)

    SERIES_ORDER = ("area", "naive_pop", "laspeyres_fixed", "paasche_fixed",
                    "laspeyres_chained", "paasche_chained", "fisher_chained")


def index_suite(temps: SnapshotSeries, pops: SnapshotSeries, area: GridRaster,
                base_epoch: int | None = None, policy=MaskPolicy.STRICT) -> IndexSuite:
    _check_epochs(temps, pops)
    policy = MaskPolicy(policy)
    base_epoch = temps.epochs[0] if base_epoch is None else base_epoch
    levels = {
        "area": area_series(temps, area, policy),
        "naive_pop": naive_pop_series(temps, pops, policy),
        "laspeyres_fixed": fixed_base_series(temps, pops, "first", policy),
        "paasche_fixed": fixed_base_series(temps, pops, "last", policy),
    }
    changes = {m: chained_changes(temps, pops, m, policy) for m in CHANGE_METHODS}
    for m in CHANGE_METHODS:
        s = chain(changes[m], 0.0)
        levels[s.method] = IndexSeries(s.epochs, s.values, s.kind, s.method, s.base_epoch,
                                       policy, changes[m].excluded_weight)
    changes["area"] = diff(levels["area"])
    changes["naive_pop"] = diff(levels["naive_pop"])
    series = {k: rebase_anomaly(levels[k], base_epoch) for k in IndexSuite.SERIES_ORDER}
    decomp = [conflation_decomposition(temps.grids[i], temps.grids[i + 1], pops.grids[i],
                                       pops.grids[i + 1], policy)
              for i in range(len(temps) - 1)]
    return IndexSuite(series, changes, decomp, base_epoch, policy,
                      levels["naive_pop"].excluded_weight)
