"""Low-level helpers for whitespace-delimited numeric text.

Blocks of lines are parsed with :func:`numpy.fromstring` after a vectorised
per-line token count. If numpy cannot consume the block cleanly, the block
is re-scanned token by token to produce a positioned diagnostic.
"""
from __future__ import annotations

import io
import os
import warnings
from contextlib import contextmanager

import numpy as np

_WHITESPACE = np.zeros(256, dtype=bool)
_WHITESPACE[[9, 10, 11, 12, 13, 32]] = True


class IngestError(ValueError):
    """Malformed input, reported with its position in the source."""

    def __init__(self, message, source=None, line=None, column=None):
        self.source = source
        self.line = line
        self.column = column
        where = ""
        if source is not None:
            where = str(source)
        if line is not None:
            where += f":{line}" if where else f"line {line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}" if where else message)


@contextmanager
def open_binary(source):
    """Yield ``(file, name)`` for a path, bytes, str or binary file object."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        yield io.BytesIO(bytes(source)), "<bytes>"
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            yield fh, os.fspath(source)
    else:
        yield source, getattr(source, "name", "<stream>")


def is_blank(line: bytes) -> bool:
    return not line.strip()


def parse_rows(lines, line_numbers, n_cols, dtype, source) -> np.ndarray:
    """Parse ``lines`` (each holding exactly ``n_cols`` tokens) into an array.

    ``line_numbers`` gives the 1-based source line of each entry and is used
    only for diagnostics.
    """
    n = len(lines)
    if n == 0:
        return np.empty((0, n_cols), dtype=dtype)
    buf = b"\n".join(line.rstrip(b"\r\n") for line in lines) + b"\n"
    u = np.frombuffer(buf, dtype=np.uint8)
    ws = _WHITESPACE[u]
    starts = ~ws
    starts[1:] &= ws[:-1]
    ends = np.flatnonzero(u == 10)
    line_starts = np.concatenate(([0], ends[:-1] + 1))
    counts = np.add.reduceat(starts, line_starts, dtype=np.int64)
    bad = np.flatnonzero(counts != n_cols)
    if bad.size:
        i = int(bad[0])
        raise IngestError(
            f"ragged row: expected {n_cols} fields, found {int(counts[i])}",
            source, line_numbers[i],
        )
    values = None
    with warnings.catch_warnings():
        warnings.simplefilter("error", DeprecationWarning)
        try:
            values = np.fromstring(buf, dtype=dtype, sep=" ")
        except (DeprecationWarning, ValueError):
            values = None
    if values is None or values.size != n * n_cols:
        _raise_bad_token(lines, line_numbers, dtype, source)
    return values.reshape(n, n_cols)


def _raise_bad_token(lines, line_numbers, dtype, source):
    convert = int if np.issubdtype(dtype, np.integer) else float
    kind = "integer" if convert is int else "number"
    for line, lineno in zip(lines, line_numbers):
        text = line.decode("ascii", errors="replace")
        pos = 0
        for tok in text.split():
            col = text.index(tok, pos)
            pos = col + len(tok)
            try:
                convert(tok)
            except ValueError:
                raise IngestError(f"unparseable {kind} {tok!r}", source, lineno, col + 1) from None
    raise IngestError("could not parse numeric block", source, line_numbers[0])


def format_rows(values: np.ndarray) -> bytes:
    """Render a 2-D array as space-separated rows, 17 significant digits.

    Integral arrays take a vectorised fixed-width path whose tokens equal
    ``'%.17g' % v``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size and np.all(np.isfinite(values)) and np.all(values == np.round(values)) \
            and np.abs(values).max() < 1e15:
        return format_int_rows(values.astype(np.int64))
    out = io.StringIO()
    fmt = "%.17g"
    for row in values.tolist():
        out.write(" ".join([fmt % v for v in row]))
        out.write("\n")
    return out.getvalue().encode("ascii")


def format_int_rows(values: np.ndarray) -> bytes:
    """Right-aligned fixed-width rendering of an integer matrix."""
    values = np.asarray(values, dtype=np.int64)
    if values.ndim != 2:
        raise ValueError("expected a 2-D array")
    n_rows, n_cols = values.shape
    if values.size == 0:
        return b"\n" * n_rows
    mag = np.abs(values)
    ndig = np.ones(values.shape, dtype=np.int64)
    p = 10
    while True:
        more = mag >= p
        if not more.any():
            break
        ndig += more
        p *= 10
    width = int((ndig + (values < 0)).max())
    field = np.full((n_rows, n_cols, width + 1), ord(" "), dtype=np.uint8)
    p = 1
    for k in range(int(ndig.max())):
        digit = (mag // p) % 10
        present = ndig > k
        field[:, :, width - k] = np.where(present, 48 + digit, 32)
        p *= 10
    neg = values < 0
    if neg.any():
        r, c = np.nonzero(neg)
        field[r, c, width - ndig[r, c]] = ord("-")
    lines = np.empty((n_rows, n_cols * (width + 1) + 1), dtype=np.uint8)
    lines[:, :-1] = field.reshape(n_rows, -1)
    lines[:, -1] = 10
    return lines.tobytes()
