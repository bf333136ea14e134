import numpy as np
import pytest

from poptemp.raster import GridRaster, SnapshotSeries


def grid(values, mask=None, **kw):
    return GridRaster.from_array(np.asarray(values, dtype=float), mask, **kw)


def series(epochs, arrays, masks=None):
    masks = masks or [None] * len(arrays)
    return SnapshotSeries(list(epochs), [grid(a, m) for a, m in zip(arrays, masks)])


@pytest.fixture
def two_cell():
    """T [10,20] -> [11,23], P [3,1] -> [1,3]."""
    temps = series([2000, 2010], [[[10.0, 20.0]], [[11.0, 23.0]]])
    pops = series([2000, 2010], [[[3.0, 1.0]], [[1.0, 3.0]]])
    return temps, pops


ACCEPTANCE_LINES = []


def acceptance_report(n, ok, detail):
    """Record and print one acceptance line; ``ok=None`` marks a skip."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"ACCEPTANCE {n}: {status} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
