"""Compensated summation helpers.

Two flavours are needed: exact-rounded scalar totals over a whole grid
(``fsum``) and elementwise accumulation of a stack of grids (``stack_sum``),
which runs Neumaier's variant of Kahan summation across the stack axis so
the result does not depend on how the cells are chunked.
"""
from __future__ import annotations

import math
from typing import Iterable

import numpy as np


def fsum(values) -> float:
    """Correctly rounded sum of all elements of ``values``.

    Uses :func:`math.fsum`, which is exact up to the final rounding and
    therefore independent of summation order.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        return 0.0
    return math.fsum(arr.tolist())


def fdot(a, b) -> float:
    """Compensated dot product of two equally shaped arrays."""
    return fsum(np.multiply(a, b, dtype=np.float64))


class StackAccumulator:
    """Elementwise Neumaier accumulator for equally shaped arrays.

    >>> acc = StackAccumulator((2,))
    >>> acc.add(np.array([1e16, 1.0]))
    >>> acc.add(np.array([1.0, 1.0]))
    >>> acc.add(np.array([-1e16, 1.0]))
    >>> acc.result()
    array([1., 3.])
    """

    def __init__(self, shape):
        self._sum = np.zeros(shape, dtype=np.float64)
        self._comp = np.zeros(shape, dtype=np.float64)
        self._tmp = np.empty(shape, dtype=np.float64)

    def add(self, x) -> None:
        x = np.asarray(x, dtype=np.float64)
        s, c, t = self._sum, self._comp, self._tmp
        np.add(s, x, out=t)
        big = np.abs(s) >= np.abs(x)
        # c += (s - t) + x where |s| >= |x|, else (x - t) + s
        c += np.where(big, (s - t) + x, (x - t) + s)
        s[...] = t

    def result(self) -> np.ndarray:
        return self._sum + self._comp


def stack_sum(arrays: Iterable[np.ndarray], shape=None) -> np.ndarray:
    """Compensated elementwise sum over an iterable of arrays."""
    acc = None
    for a in arrays:
        if acc is None:
            acc = StackAccumulator(np.shape(a) if shape is None else shape)
        acc.add(a)
    if acc is None:
        if shape is None:
            raise ValueError("stack_sum of an empty iterable needs a shape")
        return np.zeros(shape, dtype=np.float64)
    return acc.result()
