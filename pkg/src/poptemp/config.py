"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Keys (relative paths resolve against the config file's directory)::

    area_grid               fine-resolution cell-area ASCII grid
    population_grids        population grid path template containing {epoch}
    population_grid_<year>  explicit path for one epoch (overrides the template)
    temperature_archive     CRU-style monthly .dat file
    temperature_start_year  first year in the archive
    temperature_n_years     number of years in the archive
    temperature_n_lat       latitude bands per month (default 360)
    temperature_n_cols      fields per line (default 720)
    temperature_scale       multiply raw temperatures by this (default 0.1)
    temperature_offset      then add this (default 0, or 273.15 under paper_compat)
    population_nodata       sentinel in population/area grids (default -9999)
    temperature_nodata      sentinel in the archive (default -999)
    city_table              urban agglomeration CSV
    migration_stocks        migrant stock CSV
    country_temps           country temperature CSV
    country_pops            country population CSV
    epochs                  comma-separated index epochs
    population_epochs       epochs to aggregate (default: epochs)
    temperature_centers     centre year of each epoch's temperature window
                            (default: epochs; one per epoch, in order)
    window                  centred window length in years, odd (default 21)
    aggregation_factor      fine cells per coarse cell edge (default 6)
    mask_policy             strict | paper_compat (default strict)
    base_epoch              anomaly base (default: first epoch)
    uhi_alpha, uhi_beta     urban heat island power law (default 0.00174, 0.45)
    urban_start             first epoch to apply the UHI adjustment
                            (default: first epoch present in the city table)
    hist_bin_width          migration histogram bin width in degrees (default 1)
    output_dir              where the bundle and CSV files go
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .indices import MaskPolicy
from .urban import DEFAULT_UHI_ALPHA, DEFAULT_UHI_BETA


class ConfigError(ValueError):
    pass


def _years(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).replace(",", " ").split()]


@dataclass
class RunConfig:
    output_dir: Path
    epochs: list
    area_grid: Path | None = None
    population_grids: str | None = None
    population_grid_paths: dict = field(default_factory=dict)
    temperature_archive: Path | None = None
    temperature_start_year: int | None = None
    temperature_n_years: int | None = None
    temperature_n_lat: int = 360
    temperature_n_cols: int = 720
    temperature_scale: float = 0.1
    temperature_offset: float | None = None
    population_nodata: float = -9999.0
    temperature_nodata: int = -999
    city_table: Path | None = None
    migration_stocks: Path | None = None
    country_temps: Path | None = None
    country_pops: Path | None = None
    population_epochs: list | None = None
    temperature_centers: list | None = None
    window: int = 21
    aggregation_factor: int = 6
    mask_policy: MaskPolicy = MaskPolicy.STRICT
    base_epoch: int | None = None
    uhi_alpha: float = DEFAULT_UHI_ALPHA
    uhi_beta: float = DEFAULT_UHI_BETA
    urban_start: int | None = None
    hist_bin_width: float = 1.0

    PATH_KEYS = ("output_dir", "area_grid", "temperature_archive", "city_table",
                 "migration_stocks", "country_temps", "country_pops")
    INT_KEYS = ("temperature_start_year", "temperature_n_years", "temperature_n_lat",
                "temperature_n_cols", "temperature_nodata", "window", "aggregation_factor",
                "base_epoch", "urban_start")
    FLOAT_KEYS = ("temperature_scale", "temperature_offset", "population_nodata", "uhi_alpha",
                  "uhi_beta", "hist_bin_width")
    YEAR_LIST_KEYS = ("epochs", "population_epochs", "temperature_centers")

    def __post_init__(self):
        self.mask_policy = MaskPolicy(self.mask_policy)
        self.epochs = _years(self.epochs)
        if self.population_epochs is None:
            self.population_epochs = list(self.epochs)
        if self.temperature_centers is None:
            self.temperature_centers = list(self.epochs)
        if self.base_epoch is None and self.epochs:
            self.base_epoch = self.epochs[0]
        if self.temperature_offset is None:
            self.temperature_offset = 273.15 if self.mask_policy is MaskPolicy.PAPER_COMPAT else 0.0
        self.validate()

    def validate(self):
        if not self.epochs:
            raise ConfigError("no epochs configured")
        for key in self.YEAR_LIST_KEYS:
            ys = getattr(self, key)
            if any(b <= a for a, b in zip(ys, ys[1:])):
                raise ConfigError(f"{key} must be strictly increasing: {ys}")
        if len(self.temperature_centers) != len(self.epochs):
            raise ConfigError(f"{len(self.temperature_centers)} temperature_centers for "
                              f"{len(self.epochs)} epochs")
        missing = sorted(set(self.epochs) - set(self.population_epochs))
        if missing:
            raise ConfigError(f"epochs {missing} are not among population_epochs")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be a positive odd number, got {self.window}")
        if self.aggregation_factor < 1:
            raise ConfigError("aggregation_factor must be >= 1")
        if self.base_epoch not in self.epochs:
            raise ConfigError(f"base_epoch {self.base_epoch} is not one of the epochs")
        if not self.hist_bin_width > 0:
            raise ConfigError("hist_bin_width must be positive")
        paths = [os.path.abspath(p) for p in self.input_paths().values()]
        if len(paths) != len(set(paths)):
            raise ConfigError("input paths must be distinct")

    def population_path(self, epoch: int) -> Path:
        if epoch in self.population_grid_paths:
            return Path(self.population_grid_paths[epoch])
        if self.population_grids is None:
            raise ConfigError(f"no population grid configured for epoch {epoch}")
        return Path(self.population_grids.format(epoch=epoch))

    def input_paths(self) -> dict:
        out = {}
        for key in ("area_grid", "temperature_archive", "city_table", "migration_stocks",
                    "country_temps", "country_pops"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.population_grids is not None or self.population_grid_paths:
            for e in self.population_epochs:
                try:
                    out[f"population_{e}"] = self.population_path(e)
                except ConfigError:
                    pass
        return out

    @property
    def bundle_dir(self) -> Path:
        return Path(self.output_dir) / "prepared"

    # ------------------------------------------------------------------

    @classmethod
    def from_mapping(cls, values: dict, base_dir=None) -> "RunConfig":
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        kw: dict = {}
        pop_paths = {}
        known = {f.name for f in fields(cls)}
        for key, raw in values.items():
            key = key.strip()
            value = raw.strip() if isinstance(raw, str) else raw
            if key.startswith("population_grid_") and key[16:].lstrip("-").isdigit():
                pop_paths[int(key[16:])] = base / value
                continue
            if key not in known or key == "population_grid_paths":
                raise ConfigError(f"unknown config key {key!r}")
            if value == "" or value is None:
                continue
            try:
                if key in cls.PATH_KEYS:
                    kw[key] = base / value
                elif key == "population_grids":
                    kw[key] = str(base / value)
                elif key in cls.INT_KEYS:
                    kw[key] = int(value)
                elif key in cls.FLOAT_KEYS:
                    kw[key] = float(value)
                elif key in cls.YEAR_LIST_KEYS:
                    kw[key] = _years(value)
                else:
                    kw[key] = value
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
        if pop_paths:
            kw["population_grid_paths"] = pop_paths
        for required in ("output_dir", "epochs"):
            if required not in kw:
                raise ConfigError(f"missing required key {required!r}")
        try:
            return cls(**kw)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (if given) and apply ``overrides`` (relative to the cwd)."""
    file_values = read_config_file(path) if path is not None else {}
    base = Path(path).resolve().parent if path is not None else Path.cwd()
    merged = {k: (v, base) for k, v in file_values.items()}
    for k, v in (overrides or {}).items():
        merged[k] = (v, Path.cwd())
    # resolve each value against the directory it came from
    resolved = {}
    for k, (v, b) in merged.items():
        if (k in RunConfig.PATH_KEYS or k == "population_grids"
                or k.startswith("population_grid_")) and isinstance(v, str) and v:
            resolved[k] = str(b / v)
        else:
            resolved[k] = v
    return RunConfig.from_mapping(resolved, base_dir="/")
