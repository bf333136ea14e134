"""Population-weighted global temperature indices from gridded data."""
__version__ = "0.1.0"

from .indices import (ChangeSeries, IndexSeries, IndexSuite, MaskPolicy, chain, chained_changes,
                      chained_series, conflation_decomposition, diff, fisher_change,
                      fixed_base_series, index_suite, laspeyres_change, naive_pop_series,
                      paasche_change, rebase_anomaly, weighted_mean)
from .migration import migration_adjustment, migration_delta, stocks_to_flows
from .raster import GridRaster, MonthlyArchive, Orientation, SnapshotSeries
from .urban import UhiParams, build_urban_epoch, uhi_adjusted_changes, uhi_intensity

__all__ = [
    "ChangeSeries", "GridRaster", "IndexSeries", "IndexSuite", "MaskPolicy", "MonthlyArchive",
    "Orientation", "SnapshotSeries", "UhiParams", "build_urban_epoch", "chain",
    "chained_changes", "chained_series", "conflation_decomposition", "diff", "fisher_change",
    "fixed_base_series", "index_suite", "laspeyres_change", "migration_adjustment",
    "migration_delta", "naive_pop_series", "paasche_change", "rebase_anomaly",
    "stocks_to_flows", "uhi_adjusted_changes", "uhi_intensity", "weighted_mean",
]
