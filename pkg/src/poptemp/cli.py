"""Command-line pipeline: raw files -> prepared grids -> index CSV files.

Subcommands ``prepare``, ``indices``, ``urban``, ``migration`` and ``all``
share one config file (see :mod:`poptemp.config`). Output files are written
under temporary names and renamed only when the whole command succeeds.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .indices import CHANGE_METHODS, IndexSuite, MaskPolicy, index_suite, weighted_mean
from .ingest import IngestError, iter_cru_years, parse_ascii_grid, parse_city_table
from .ingest.tables import parse_migration_tables
from .migration import experienced_histogram, stock_deltas, summarize_transition
from .raster import (CANONICAL_ORIENTATION, GeometryError, GridRaster, SnapshotSeries,
                     aggregate_blocks, annual_mean, centered_mean, convert_units, reorient)
from .urban import (UhiParams, build_urban_epochs, mean_urban_uhi, uhi_adjusted_changes,
                    uhi_adjusted_level, urban_share)

log = logging.getLogger("poptemp")

OUTPUT_FILES = ("indices.csv", "changes.csv", "decomposition.csv", "urban.csv",
                "migration.csv", "migration_histogram.csv", "manifest.txt")


class PipelineError(RuntimeError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % x


class OutputSet:
    """Collects files written under temporary names; commits or discards them together."""

    def __init__(self):
        self._pending: list[tuple[Path, Path]] = []

    def path(self, final) -> Path:
        final = Path(final)
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(final.name + ".partial")
        self._pending.append((tmp, final))
        return tmp

    def write_bytes(self, final, data: bytes) -> None:
        self.path(final).write_bytes(data)

    def commit(self) -> None:
        for tmp, final in self._pending:
            tmp.replace(final)
        self._pending.clear()

    def discard(self) -> None:
        for tmp, _ in self._pending:
            tmp.unlink(missing_ok=True)
        self._pending.clear()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False


def write_csv(out: OutputSet, path, meta: dict, header, rows) -> None:
    lines = ["# " + " ".join(f"{k}={_meta_value(v)}" for k, v in meta.items()),
             ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    out.write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def _meta_value(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _npy_bytes(grid: GridRaster) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.where(grid.mask, grid.values, np.nan), allow_pickle=False)
    return buf.getvalue()


# --------------------------------------------------------------------------
# prepare


def _read_fine_grid(path, cfg: RunConfig, what: str) -> GridRaster:
    if not Path(path).exists():
        raise PipelineError(f"{what}: file not found: {path}")
    g = parse_ascii_grid(path, nodata=cfg.population_nodata)
    coarse = aggregate_blocks(g, cfg.aggregation_factor, "sum")
    return reorient(coarse, CANONICAL_ORIENTATION)


def cmd_prepare(cfg: RunConfig, out: OutputSet) -> dict:
    """Aggregate population/area, average temperatures, write the bundle and manifest."""
    if cfg.area_grid is None or cfg.temperature_archive is None:
        raise PipelineError("prepare needs area_grid and temperature_archive")
    if cfg.temperature_start_year is None or cfg.temperature_n_years is None:
        raise PipelineError("prepare needs temperature_start_year and temperature_n_years")

    area = _read_fine_grid(cfg.area_grid, cfg, "area grid")
    pops = {}
    for e in cfg.population_epochs:
        try:
            path = cfg.population_path(e)
        except ConfigError as exc:
            raise PipelineError(str(exc)) from None
        pops[e] = _read_fine_grid(path, cfg, f"population grid for epoch {e}")
        log.info("population %d aggregated from %s", e, path)

    if not Path(cfg.temperature_archive).exists():
        raise PipelineError(f"temperature archive not found: {cfg.temperature_archive}")
    annual = []
    for year, months in iter_cru_years(cfg.temperature_archive, cfg.temperature_n_lat,
                                       cfg.temperature_n_cols, cfg.temperature_start_year,
                                       cfg.temperature_n_years, nodata=cfg.temperature_nodata):
        annual.append(convert_units(annual_mean(months), cfg.temperature_scale,
                                    cfg.temperature_offset))
    years = list(range(cfg.temperature_start_year,
                       cfg.temperature_start_year + cfg.temperature_n_years))
    annual_series = SnapshotSeries(years, annual)
    try:
        centred = centered_mean(annual_series, cfg.temperature_centers, cfg.window)
    except ValueError as exc:
        raise PipelineError(f"temperature window: {exc}") from None

    template = annual[0]
    for name, g in [("area", area)] + [(f"population {e}", p) for e, p in pops.items()]:
        if not g.same_geometry(template, tol=1e-6):
            raise GeometryError(
                f"{name} grid ({g.shape}, origin {g.origin_lat}/{g.origin_lon}, "
                f"cell {g.cell_size}) does not match the temperature grid ({template.shape}, "
                f"origin {template.origin_lat}/{template.origin_lon}, cell {template.cell_size})"
            )

    bundle = cfg.bundle_dir
    entries = []

    def put(variable, epoch, grid):
        data = _npy_bytes(grid)
        name = f"{variable}.npy" if epoch is None else f"{variable}_{epoch}.npy"
        out.write_bytes(bundle / name, data)
        entries.append((variable, "-" if epoch is None else str(epoch),
                        f"prepared/{name}", _sha256(data)))

    put("area", None, area)
    for e, g in pops.items():
        put("population", e, g)
    for y, g in annual_series:
        put("temperature_annual", y, g)
    for e, (c, g) in zip(cfg.epochs, centred):
        put("temperature", e, g)

    geometry = {
        "n_rows": template.n_rows, "n_cols": template.n_cols,
        "origin_lat": template.origin_lat, "origin_lon": template.origin_lon,
        "cell_size": template.cell_size, "orientation": template.orientation.value,
        "epochs": cfg.epochs, "population_epochs": cfg.population_epochs,
        "temperature_centers": cfg.temperature_centers, "window": cfg.window,
        "temperature_scale": cfg.temperature_scale,
        "temperature_offset": cfg.temperature_offset,
        "annual_years": years,
    }
    gdata = (json.dumps(geometry, sort_keys=True, indent=1) + "\n").encode("ascii")
    out.write_bytes(bundle / "grid.json", gdata)
    entries.append(("geometry", "-", "prepared/grid.json", _sha256(gdata)))

    lines = [
        "# poptemp prepared bundle",
        f"# window={cfg.window} aggregation_factor={cfg.aggregation_factor} "
        f"temperature_scale={cfg.temperature_scale!r} "
        f"temperature_offset={cfg.temperature_offset!r}",
        "variable\tepoch\tfile\tsha256",
    ] + ["\t".join(e) for e in entries]
    out.write_bytes(Path(cfg.output_dir) / "manifest.txt", ("\n".join(lines) + "\n").encode())
    return {"area": area, "pops": pops, "temps": centred}


def _read_manifest(cfg: RunConfig) -> dict:
    path = Path(cfg.output_dir) / "manifest.txt"
    if not path.exists():
        raise PipelineError(f"prepared bundle missing: {path} not found (run 'prepare' first)")
    entries = {}
    for line in path.read_text().splitlines():
        if line.startswith("#") or line.startswith("variable\t") or not line.strip():
            continue
        variable, epoch, file, digest = line.split("\t")
        entries[(variable, epoch)] = (Path(cfg.output_dir) / file, digest)
    return entries


def load_bundle(cfg: RunConfig, verify: bool = True):
    """Return ``(temps, pops, area)`` for the configured epochs from a prepared bundle."""
    entries = _read_manifest(cfg)
    geo_path = cfg.bundle_dir / "grid.json"
    if not geo_path.exists():
        raise PipelineError(f"prepared bundle missing: {geo_path}")
    geo = json.loads(geo_path.read_text())

    def load(variable, epoch):
        key = (variable, "-" if epoch is None else str(epoch))
        if key not in entries:
            raise PipelineError(f"prepared bundle has no {variable} grid for epoch {epoch}; "
                                "re-run 'prepare'")
        path, digest = entries[key]
        data = path.read_bytes()
        if verify and _sha256(data) != digest:
            raise PipelineError(f"checksum mismatch for {path}; re-run 'prepare'")
        arr = np.load(io.BytesIO(data), allow_pickle=False)
        return GridRaster(arr, ~np.isnan(arr), geo["origin_lat"], geo["origin_lon"],
                          geo["cell_size"], geo["orientation"])

    temps = SnapshotSeries(cfg.epochs, [load("temperature", e) for e in cfg.epochs])
    pops = SnapshotSeries(cfg.epochs, [load("population", e) for e in cfg.epochs])
    return temps, pops, load("area", None)


# --------------------------------------------------------------------------
# indices


def _meta(cfg: RunConfig, method: str, **extra) -> dict:
    meta = {"method": method, "mask_policy": cfg.mask_policy.value, "base_epoch": cfg.base_epoch}
    meta.update(extra)
    return meta


def cmd_indices(cfg: RunConfig, out: OutputSet) -> IndexSuite:
    temps, pops, area = load_bundle(cfg)
    suite = index_suite(temps, pops, area, cfg.base_epoch, cfg.mask_policy)
    order = IndexSuite.SERIES_ORDER
    rows = []
    for i, e in enumerate(cfg.epochs):
        rows.append([e] + [suite.series[k].values[i] for k in order]
                    + [suite.excluded_pop[i]])
    odir = Path(cfg.output_dir)
    write_csv(out, odir / "indices.csv",
              _meta(cfg, ",".join(order), kind="anomaly", units="degC"),
              ["epoch", *order, "excluded_pop_fraction"], rows)

    ch = suite.changes
    rows = []
    for i, (a, b) in enumerate(zip(cfg.epochs, cfg.epochs[1:])):
        rows.append([a, b, ch["area"].deltas[i], ch["naive_pop"].deltas[i]]
                    + [ch[m].deltas[i] for m in CHANGE_METHODS]
                    + [ch["laspeyres"].excluded_weight[i], ch["paasche"].excluded_weight[i]])
    write_csv(out, odir / "changes.csv", _meta(cfg, "area,naive_pop," + ",".join(CHANGE_METHODS),
                                               units="degC_per_transition"),
              ["epoch_from", "epoch_to", "area", "naive_pop", *CHANGE_METHODS,
               "excluded_weight_laspeyres", "excluded_weight_paasche"], rows)

    rows = [[a, b, *d] for (a, b), d in zip(zip(cfg.epochs, cfg.epochs[1:]), suite.decompositions)]
    write_csv(out, odir / "decomposition.csv", _meta(cfg, "conflation_decomposition",
                                                     units="degC"),
              ["epoch_from", "epoch_to", "total", "pure_temp", "composition", "residual"], rows)
    return suite


# --------------------------------------------------------------------------
# urban


def urban_table(cfg: RunConfig, temps, pops, cities):
    """Rows of (epoch, unadjusted, adjusted, difference, share, mean uhi, caps).

    Both series chain Fisher changes from 0 at the first epoch. At the first
    urban epoch the adjusted series also picks up the level offset of urban
    dwellers; later urban transitions add the share-weighted UHI change.
    Both are reported relative to the unadjusted value at ``base_epoch``.
    """
    params = UhiParams(cfg.uhi_alpha, cfg.uhi_beta)
    urban = build_urban_epochs(cities, pops, params, start=cfg.urban_start)
    changes = uhi_adjusted_changes(temps, pops, urban, "fisher", cfg.mask_policy)
    epochs = list(temps.epochs)
    unadj = [0.0]
    adjusted = [0.0]
    for i in range(1, len(epochs)):
        unadj.append(unadj[-1] + changes.base.deltas[i - 1])
        adjusted.append(adjusted[-1] + changes.adjusted.deltas[i - 1])
    first_urban = min(urban) if urban else None
    if first_urban is not None:
        e = first_urban
        offset = (uhi_adjusted_level(temps[e], pops[e], urban[e], cfg.mask_policy)
                  - weighted_mean(temps[e], pops[e], cfg.mask_policy))
        for i in range(epochs.index(e), len(epochs)):
            adjusted[i] += offset
    base_value = unadj[epochs.index(cfg.base_epoch)]
    rows = []
    for i, e in enumerate(epochs):
        u = urban.get(e)
        rows.append([
            e, unadj[i] - base_value, adjusted[i] - base_value, adjusted[i] - unadj[i],
            urban_share(pops[e], u, cfg.mask_policy) if u else None,
            mean_urban_uhi(pops[e], u, cfg.mask_policy) if u else None,
            u.cap_events if u else None,
        ])
    return rows, changes


def cmd_urban(cfg: RunConfig, out: OutputSet):
    if cfg.city_table is None:
        raise PipelineError("urban needs city_table")
    if not Path(cfg.city_table).exists():
        raise PipelineError(f"city table not found: {cfg.city_table}")
    temps, pops, _ = load_bundle(cfg)
    cities = parse_city_table(cfg.city_table)
    rows, changes = urban_table(cfg, temps, pops, cities)
    write_csv(out, Path(cfg.output_dir) / "urban.csv",
              _meta(cfg, "fisher_chained,uhi_adjusted", kind="anomaly", units="degC",
                    uhi_alpha=cfg.uhi_alpha, uhi_beta=cfg.uhi_beta),
              ["epoch", "fisher_unadjusted", "fisher_adjusted", "difference", "urban_share",
               "mean_urban_uhi", "cap_events"], rows)
    return rows


# --------------------------------------------------------------------------
# migration


def cmd_migration(cfg: RunConfig, out: OutputSet):
    for key in ("migration_stocks", "country_temps", "country_pops"):
        p = getattr(cfg, key)
        if p is None:
            raise PipelineError(f"migration needs {key}")
        if not Path(p).exists():
            raise PipelineError(f"{key} not found: {p}")
    table = parse_migration_tables(cfg.migration_stocks, cfg.country_temps, cfg.country_pops)
    summaries = [summarize_transition(table, a, b, cfg.hist_bin_width)
                 for a, b in zip(table.epochs, table.epochs[1:])]
    rows, cumulative = [], 0.0
    for s in summaries:
        cumulative += s.adjustment
        h = s.histogram
        rows.append([s.epoch_from, s.epoch_to, s.total_migrants, s.mean_delta, s.world_pop,
                     s.migrant_share, s.adjustment, cumulative, s.clamped_total,
                     h.share_within_2 if h.bins else None,
                     h.share_beyond_10 if h.bins else None,
                     h.share_cooling if h.bins else None])
    odir = Path(cfg.output_dir)
    write_csv(out, odir / "migration.csv",
              _meta(cfg, "migration_adjusted", view="flows", units="degC"),
              ["epoch_from", "epoch_to", "total_migrants", "mean_delta", "world_pop",
               "migrant_share", "adjustment", "cumulative_adjustment", "clamped_total",
               "share_abs_le_2", "share_abs_ge_10", "share_cooling"], rows)

    hist_rows = []
    for s in summaries:
        for b in s.histogram.bins:
            hist_rows.append(["flows", s.epoch_from, s.epoch_to, b.lower, b.upper, b.count,
                              b.share])
    for e in table.epochs:
        h = experienced_histogram(*stock_deltas(table.matrix(e)), cfg.hist_bin_width)
        for b in h.bins:
            hist_rows.append(["stocks", e, e, b.lower, b.upper, b.count, b.share])
    write_csv(out, odir / "migration_histogram.csv",
              _meta(cfg, "experienced_histogram", bin_width=cfg.hist_bin_width,
                    units="degC"),
              ["view", "epoch_from", "epoch_to", "bin_lower", "bin_upper", "migrants", "share"],
              hist_rows)
    return summaries


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poptemp",
        description="Population-weighted temperature indices from gridded data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("prepare", "aggregate population, average temperatures, write the bundle"),
        ("indices", "area/population index series"),
        ("urban", "urban heat island adjusted Fisher series"),
        ("migration", "migration-experienced temperature change"),
        ("all", "prepare, indices, and urban/migration when their inputs are configured"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", nargs="?", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--output-dir", help="override output_dir")
        p.add_argument("--mask-policy", choices=[m.value for m in MaskPolicy])
        p.add_argument("--base-epoch", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if args.output_dir:
        out["output_dir"] = args.output_dir
    if args.mask_policy:
        out["mask_policy"] = args.mask_policy
    if args.base_epoch is not None:
        out["base_epoch"] = str(args.base_epoch)
    return out


def run(command: str, cfg: RunConfig) -> None:
    with OutputSet() as out:
        if command in ("prepare", "all"):
            cmd_prepare(cfg, out)
            if command == "all":
                out.commit()
        if command in ("indices", "all"):
            cmd_indices(cfg, out)
        if command == "urban" or (command == "all" and cfg.city_table is not None):
            cmd_urban(cfg, out)
        if command == "migration" or (command == "all" and cfg.migration_stocks is not None):
            cmd_migration(cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        run(args.command, cfg)
    except (ConfigError, IngestError, PipelineError, GeometryError, ValueError,
            KeyError, OSError) as exc:
        print(f"poptemp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # unexpected: still fail cleanly, keep the traceback in -v
        log.debug("unexpected failure", exc_info=True)
        print(f"poptemp {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
