"""Cell indexing helpers for multi-way contingency tables.

Cells are vectorised with the first variable changing fastest: the linear
index of levels ``(t_1, ..., t_k)`` (0-based) is ``sum(t_j * stride_j)`` with
``stride_1 = 1`` and ``stride_j = prod(levels[:j-1])``.  All matrices in the
package (marginalisation, contrasts, probability vectors, count vectors)
share this convention.
"""

from __future__ import annotations

import numpy as np

__all__ = ["strides", "n_cells", "cell_levels", "cell_index"]


def strides(levels) -> np.ndarray:
    """Per-variable strides for the first-fastest vec ordering."""
    levels = np.asarray(levels, dtype=np.int64)
    return np.concatenate(([1], np.cumprod(levels[:-1])))


def n_cells(levels) -> int:
    return int(np.prod(np.asarray(levels, dtype=np.int64))) if len(levels) else 1


def cell_levels(levels) -> np.ndarray:
    """0-based level of every variable at every cell.

    Returns an ``(n_cells, n_vars)`` integer array whose row ``i`` gives the
    level tuple of the cell with linear index ``i``.
    """
    levels = np.asarray(levels, dtype=np.int64)
    total = n_cells(levels)
    s = strides(levels)
    idx = np.arange(total, dtype=np.int64)
    return (idx[:, None] // s[None, :]) % levels[None, :]


def cell_index(level_tuples: np.ndarray, levels) -> np.ndarray:
    """Linear indices of 0-based level tuples (rows of ``level_tuples``)."""
    s = strides(levels)
    return np.asarray(level_tuples, dtype=np.int64) @ s
