import csv
import hashlib
import io
from pathlib import Path

import numpy as np
import pytest

from oracles import loop_suite, migration_oracle, uhi_oracle
from poptemp.cli import main
from poptemp.config import ConfigError, load_config
from poptemp.ingest import TrendSpec, write_synthetic_inputs

SERIES = ("area", "naive_pop", "laspeyres_fixed", "paasche_fixed", "laspeyres_chained",
          "paasche_chained", "fisher_chained")


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# ")
    meta = dict(item.split("=", 1) for item in lines[0][2:].split())
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    return meta, rows


def col(rows, name):
    return [float(r[name]) if r[name] != "" else None for r in rows]


@pytest.fixture(scope="module")
def fixture_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("world")
    cfg = write_synthetic_inputs(d, seed=2)
    assert main(["all", str(cfg)]) == 0
    return cfg, d / "out"


# -- prepare ----------------------------------------------------------------------------------

def test_manifest_lists_grid_per_epoch_per_variable(fixture_run):
    cfg, out = fixture_run
    lines = [l.split("\t") for l in (out / "manifest.txt").read_text().splitlines()
             if not l.startswith("#")][1:]
    by_var = {}
    for variable, epoch, path, digest in lines:
        by_var.setdefault(variable, []).append(epoch)
        assert hashlib.sha256((out / path).read_bytes()).hexdigest() == digest
    assert by_var["population"] == ["1910", "1920", "1930"]
    assert by_var["temperature"] == ["1910", "1920", "1930"]
    assert by_var["area"] == ["-"]
    assert len(by_var["temperature_annual"]) == 40


def test_prepare_is_idempotent(fixture_run, tmp_path):
    cfg, out = fixture_run
    before = {p.name: p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert main(["all", str(cfg)]) == 0
    after = {p.name: p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert before == after


def test_missing_population_epoch_names_epoch(tmp_path, capsys):
    cfg = write_synthetic_inputs(tmp_path, seed=3, with_tables=False)
    (tmp_path / "population" / "popc1920AD.asc").unlink()
    assert main(["prepare", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "1920" in err and "popc1920AD.asc" in err
    assert not (tmp_path / "out").exists() or not any((tmp_path / "out").rglob("*.*"))


def test_parser_error_propagates_with_position(tmp_path, capsys):
    cfg = write_synthetic_inputs(tmp_path, seed=3, with_tables=False)
    cru = tmp_path / "cru.dat"
    lines = cru.read_bytes().splitlines(keepends=True)
    lines[5] = b"12 oops\n"
    cru.write_bytes(b"".join(lines))
    assert main(["prepare", str(cfg)]) == 1
    assert "cru.dat:6:" in capsys.readouterr().err


def test_geometry_mismatch_is_reported(tmp_path, capsys):
    cfg = write_synthetic_inputs(tmp_path, seed=3, with_tables=False,
                                 extra_config={"aggregation_factor": 3})
    assert main(["prepare", str(cfg)]) == 1
    assert "does not match the temperature grid" in capsys.readouterr().err


# -- indices --------------------------------------------------------------------------------

def test_every_csv_has_metadata_header(fixture_run):
    _, out = fixture_run
    for name in ("indices.csv", "changes.csv", "decomposition.csv", "urban.csv",
                 "migration.csv", "migration_histogram.csv"):
        meta, rows = read_csv(out / name)
        assert {"method", "mask_policy", "base_epoch"} <= meta.keys(), name
        assert meta["mask_policy"] == "strict" and meta["base_epoch"] == "1910"
        assert rows


def test_values_written_round_trip(fixture_run):
    cfg, out = fixture_run
    from poptemp.cli import load_bundle
    from poptemp.indices import index_suite
    conf = load_config(cfg)
    temps, pops, area = load_bundle(conf)
    suite = index_suite(temps, pops, area, conf.base_epoch, conf.mask_policy)
    _, rows = read_csv(out / "indices.csv")
    for k in SERIES:
        assert col(rows, k) == suite.series[k].values.tolist()


def test_uniform_warming_fixture_columns_identical(tmp_path):
    spec = TrendSpec(temperature="uniform", population="constant", warming_per_epoch=1.0)
    cfg = write_synthetic_inputs(tmp_path, seed=4, trend_spec=spec, with_tables=False)
    assert main(["indices", str(cfg)]) == 1  # no bundle yet
    assert main(["prepare", str(cfg)]) == 0
    assert main(["indices", str(cfg)]) == 0
    _, rows = read_csv(tmp_path / "out" / "indices.csv")
    ref = col(rows, "area")
    assert ref == pytest.approx([0.0, 10.0, 20.0], abs=1e-9)
    for k in SERIES:
        assert col(rows, k) == pytest.approx(ref, abs=1e-9), k


def test_pure_shift_fixture(tmp_path):
    spec = TrendSpec.population_shift()
    cfg = write_synthetic_inputs(tmp_path, seed=5, trend_spec=spec, with_tables=False)
    assert main(["all", str(cfg)]) == 0
    _, rows = read_csv(tmp_path / "out" / "indices.csv")
    for k in ("laspeyres_chained", "paasche_chained", "fisher_chained"):
        assert col(rows, k) == [0.0, 0.0, 0.0]
    naive = col(rows, "naive_pop")
    assert abs(naive[-1]) > 1e-3


def _write_three_cell_world(d):
    """2x4 grid of 90-degree cells with three valid cells, three epochs."""
    d.mkdir(parents=True, exist_ok=True)
    head = "ncols 4\nnrows 2\nxllcorner -180\nyllcorner -90\ncellsize 90\nNODATA_value -9999\n"
    # file rows are north to south; valid cells: (N,0), (S,1), (S,3)
    (d / "area.asc").write_text(head + "3 -9999 -9999 -9999\n-9999 2 -9999 5\n")
    pops = {2000: (4, 1, 2), 2001: (1, 3, 2), 2002: (2, 2, 9)}
    for e, (a, b, c) in pops.items():
        (d / f"pop{e}.asc").write_text(head + f"{a} -9999 -9999 -9999\n-9999 {b} -9999 {c}\n")
    temps = {2000: (100, 200, -50), 2001: (115, 230, -40), 2002: (120, 215, -65)}
    lines = []
    for e in (2000, 2001, 2002):
        a, b, c = temps[e]
        for m in range(12):
            # CRU rows run south to north: row 0 south, row 1 north
            lines.append(f"-999 {b + m - 6} -999 {c}")
            lines.append(f"{a} -999 -999 -999")
    (d / "t.dat").write_text("\n".join(lines) + "\n")
    (d / "run.cfg").write_text(
        "area_grid = area.asc\npopulation_grids = pop{epoch}.asc\ntemperature_archive = t.dat\n"
        "temperature_start_year = 2000\ntemperature_n_years = 3\ntemperature_n_lat = 2\n"
        "temperature_n_cols = 4\nepochs = 2000, 2001, 2002\nwindow = 1\n"
        "aggregation_factor = 1\noutput_dir = out\n")
    T = [np.array([[np.nan, b - 0.5, np.nan, c],
                   [a, np.nan, np.nan, np.nan]]) * 0.1 for a, b, c in temps.values()]
    P = [np.array([[0, b, 0, c], [a, 0, 0, 0]], float) for a, b, c in pops.values()]
    A = np.array([[0, 2, 0, 5], [3, 0, 0, 0]], float)
    valid = np.array([[False, True, False, True], [True, False, False, False]])
    return d / "run.cfg", T, P, A, valid


def test_three_cell_csv_equals_brute_force(tmp_path):
    cfg, T, P, A, valid = _write_three_cell_world(tmp_path)
    assert main(["all", str(cfg)]) == 0
    _, rows = read_csv(tmp_path / "out" / "indices.csv")
    oracle = loop_suite(T, P, A, [valid] * 3, [valid] * 3, valid)
    for k in SERIES:
        assert col(rows, k) == pytest.approx(oracle[k], abs=1e-12), k
    _, ch = read_csv(tmp_path / "out" / "changes.csv")
    assert col(ch, "fisher") == pytest.approx(np.diff(oracle["fisher_chained"]), abs=1e-12)
    _, dec = read_csv(tmp_path / "out" / "decomposition.csv")
    for r in dec:
        parts = float(r["pure_temp"]) + float(r["composition"]) + float(r["residual"])
        assert float(r["total"]) == pytest.approx(parts, abs=1e-12)


def test_flags_override_file(tmp_path):
    cfg, *_ = _write_three_cell_world(tmp_path)
    assert main(["all", str(cfg), "--base-epoch", "2001", "--output-dir",
                 str(tmp_path / "o2"), "--set", "mask_policy=paper_compat"]) == 0
    meta, rows = read_csv(tmp_path / "o2" / "indices.csv")
    assert meta["base_epoch"] == "2001" and meta["mask_policy"] == "paper_compat"
    assert col(rows, "area")[1] == 0.0


# -- urban ------------------------------------------------------------------------------------

def _independent_urban(cfg_path):
    """UHI-adjusted levels and changes by loops over the bundle and the city CSV."""
    from poptemp.cli import load_bundle
    conf = load_config(cfg_path)
    temps, pops, _ = load_bundle(conf)
    rows = list(csv.DictReader(open(conf.city_table)))
    epochs = list(temps.epochs)
    tmpl = temps.grids[0]
    nu, U = {}, {}
    for e in epochs:
        city_pop = np.zeros(tmpl.shape)
        wu = np.zeros(tmpl.shape)
        for r in rows:
            p = float(r[f"pop_{e}"])
            i = int((float(r["lat"]) + 90) // tmpl.cell_size)
            j = int((float(r["lon"]) + 180) // tmpl.cell_size)
            city_pop[i, j] += p
            wu[i, j] += p * uhi_oracle(p)
        cell = np.nan_to_num(pops[e].values)
        nu[e] = np.where(cell > 0, np.minimum(city_pop, cell) / np.where(cell > 0, cell, 1), 0)
        U[e] = np.where(city_pop > 0, wu / np.where(city_pop > 0, city_pop, 1), 0)

    def sel(*gs):
        m = np.ones(tmpl.shape, bool)
        for g in gs:
            m &= g.mask
        return m

    def change(i, w_e):
        t0, t1, p = temps.grids[i], temps.grids[i + 1], pops[w_e]
        m = sel(t0, t1, p)
        w = p.values[m]
        base = np.sum((t1.values[m] - t0.values[m]) * w) / np.sum(w)
        uhi = np.sum((U[epochs[i + 1]][m] - U[epochs[i]][m]) * nu[w_e][m] * w) / np.sum(w)
        return base, uhi

    unadj, adj = [0.0], [0.0]
    for i in range(len(epochs) - 1):
        bl, ul = change(i, epochs[i])
        bp, up = change(i, epochs[i + 1])
        unadj.append(unadj[-1] + 0.5 * (bl + bp))
        adj.append(adj[-1] + 0.5 * (bl + bp) + 0.5 * (ul + up))
    e0 = epochs[0]
    m = sel(temps[e0], pops[e0])
    w = pops[e0].values[m]
    offset = np.sum(U[e0][m] * nu[e0][m] * w) / np.sum(w)
    adj = [a + offset for a in adj]
    return unadj, adj


def test_urban_matches_independent_oracle(fixture_run):
    cfg, out = fixture_run
    _, rows = read_csv(out / "urban.csv")
    unadj, adj = _independent_urban(cfg)
    assert col(rows, "fisher_unadjusted") == pytest.approx(unadj, abs=1e-9)
    assert col(rows, "fisher_adjusted") == pytest.approx(adj, abs=1e-9)
    diff = [a - b for a, b in zip(col(rows, "fisher_adjusted"), col(rows, "fisher_unadjusted"))]
    assert col(rows, "difference") == pytest.approx(diff, abs=1e-15)
    _, ind = read_csv(out / "indices.csv")
    assert col(rows, "fisher_unadjusted") == pytest.approx(col(ind, "fisher_chained"),
                                                           abs=1e-12)


def test_urban_identity_fixture(tmp_path):
    cfg = write_synthetic_inputs(tmp_path, seed=6)
    text = (tmp_path / "cities.csv").read_text().splitlines()
    (tmp_path / "cities.csv").write_text(text[0] + "\n")
    assert main(["all", str(cfg)]) == 0
    _, rows = read_csv(tmp_path / "out" / "urban.csv")
    assert col(rows, "difference") == [0.0, 0.0, 0.0]
    assert col(rows, "urban_share") == [0.0, 0.0, 0.0]


def test_urban_constant_uhi_fixture(tmp_path):
    spec = TrendSpec(temperature="random", population="constant")
    cfg = write_synthetic_inputs(tmp_path, seed=7, trend_spec=spec)
    assert main(["all", str(cfg)]) == 0
    _, rows = read_csv(tmp_path / "out" / "urban.csv")
    d = col(rows, "difference")
    assert d[0] > 0 and d == pytest.approx([d[0]] * 3, abs=1e-12)


def test_urban_needs_city_table(tmp_path, capsys):
    cfg = write_synthetic_inputs(tmp_path, seed=3, with_tables=False)
    assert main(["prepare", str(cfg)]) == 0
    assert main(["urban", str(cfg)]) == 1
    assert "city_table" in capsys.readouterr().err


# -- migration -------------------------------------------------------------------------------

def _migration_cfg(d, stocks, temps, pops):
    d.mkdir(parents=True, exist_ok=True)
    (d / "s.csv").write_text(stocks)
    (d / "t.csv").write_text(temps)
    (d / "p.csv").write_text(pops)
    (d / "m.cfg").write_text("epochs = 1990\nmigration_stocks = s.csv\ncountry_temps = t.csv\n"
                             "country_pops = p.csv\noutput_dir = out\n")
    return d / "m.cfg"


TEMPS = "country,epoch,mean_temp_c\nA,1990,25\nB,1990,10\nA,2000,25\nB,2000,10\n"
POPS = "country,epoch,population\nA,1990,500\nB,1990,500\nA,2000,600\nB,2000,400\n"


def test_migration_zero_flow(tmp_path):
    cfg = _migration_cfg(tmp_path, "epoch,origin,destination,stock\n1990,A,B,7\n2000,A,B,7\n",
                         TEMPS, POPS)
    assert main(["migration", str(cfg)]) == 0
    _, rows = read_csv(tmp_path / "out" / "migration.csv")
    assert col(rows, "adjustment") == [0.0] and rows[0]["mean_delta"] == ""


def test_migration_single_migrant(tmp_path):
    cfg = _migration_cfg(tmp_path, "epoch,origin,destination,stock\n1990,A,B,7\n2000,A,B,8\n",
                         TEMPS, POPS)
    assert main(["migration", str(cfg)]) == 0
    _, rows = read_csv(tmp_path / "out" / "migration.csv")
    assert col(rows, "mean_delta") == [-15.0]
    assert col(rows, "adjustment") == [-15.0 / 1000]
    _, hist = read_csv(tmp_path / "out" / "migration_histogram.csv")
    flows = [r for r in hist if r["view"] == "flows"]
    assert len(flows) == 1 and float(flows[0]["migrants"]) == 1.0
    assert float(flows[0]["bin_lower"]) == -15.0


def test_migration_five_country_oracle(fixture_run):
    cfg, out = fixture_run
    conf = load_config(cfg)
    stocks = {}
    for r in csv.DictReader(open(conf.migration_stocks)):
        stocks.setdefault(int(r["epoch"]), {})[(r["origin"], r["destination"])] = \
            float(r["stock"])
    temps = {}
    for r in csv.DictReader(open(conf.country_temps)):
        temps.setdefault(int(r["epoch"]), {})[r["country"]] = float(r["mean_temp_c"])
    _, rows = read_csv(out / "migration.csv")
    epochs = sorted(stocks)
    assert len(rows) == len(epochs) - 1
    cum = 0.0
    for r, (e0, e1) in zip(rows, zip(epochs, epochs[1:])):
        expect = migration_oracle(stocks[e0], stocks[e1], temps[e0], temps[e1])
        assert float(r["mean_delta"]) == pytest.approx(expect, abs=1e-12)
        cum += float(r["adjustment"])
        assert float(r["cumulative_adjustment"]) == pytest.approx(cum, abs=1e-15)


def test_migration_missing_inputs(tmp_path, capsys):
    (tmp_path / "m.cfg").write_text("epochs = 1990\noutput_dir = out\n")
    assert main(["migration", str(tmp_path / "m.cfg")]) == 1
    assert "migration_stocks" in capsys.readouterr().err


# -- failure hygiene and config ---------------------------------------------------------------

def test_failure_removes_partial_outputs(tmp_path):
    cfg = write_synthetic_inputs(tmp_path, seed=8)
    (tmp_path / "migration_stocks.csv").write_text("epoch,origin,destination,stock\n1,Q,R,1\n")
    assert main(["all", str(cfg)]) == 1
    out = tmp_path / "out"
    assert not (out / "indices.csv").exists()
    assert not (out / "urban.csv").exists()
    assert not list(out.rglob("*.partial"))


def test_config_validation(tmp_path):
    (tmp_path / "bad.cfg").write_text("epochs = 2000, 1990\noutput_dir = o\n")
    with pytest.raises(ConfigError, match="increasing"):
        load_config(tmp_path / "bad.cfg")
    (tmp_path / "w.cfg").write_text("epochs = 2000\noutput_dir = o\nwindow = 4\n")
    with pytest.raises(ConfigError, match="odd"):
        load_config(tmp_path / "w.cfg")
    (tmp_path / "u.cfg").write_text("epochs = 2000\noutput_dir = o\ncolour = red\n")
    with pytest.raises(ConfigError, match="unknown"):
        load_config(tmp_path / "u.cfg")
    (tmp_path / "d.cfg").write_text("epochs = 2000\noutput_dir = o\narea_grid = x\n"
                                    "temperature_archive = x\n")
    with pytest.raises(ConfigError, match="distinct"):
        load_config(tmp_path / "d.cfg")


def test_config_paths_resolve_against_file(tmp_path):
    sub = tmp_path / "conf"
    sub.mkdir()
    (sub / "r.cfg").write_text("epochs = 2000\noutput_dir = out\narea_grid = a.asc\n"
                               "population_grid_2000 = p/2000.asc\n")
    conf = load_config(sub / "r.cfg")
    assert conf.area_grid == (sub / "a.asc").resolve()
    assert conf.population_path(2000) == (sub / "p" / "2000.asc").resolve()


def test_cli_rejects_malformed_set(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("epochs = 2000\noutput_dir = o\n")
    assert main(["indices", str(tmp_path / "c.cfg"), "--set", "novalue"]) == 1
