"""File formats: graph declarations, counts CSVs, traces, summaries, metadata.

Graph files are line oriented: ``var NAME LEVELS`` declarations (their order
defines the canonical vertex order) followed by ``edge NAME NAME`` lines;
``#`` starts a comment.  Counts files are CSVs with one column per variable
(1-based level indices) plus ``count``; rows may come in any order, missing
cells default to zero and duplicate cells are an error.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import _tables
from .graphs import BidirectedGraph, from_edge_list
from .model import ContingencyTable
from .samplers import Trace

__all__ = [
    "read_graph",
    "read_counts",
    "write_counts",
    "write_trace",
    "read_trace",
    "write_summary",
    "write_metadata",
    "read_metadata",
    "write_matrix",
]


def read_graph(path) -> BidirectedGraph:
    vertices, edges = [], []
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "var" and len(parts) == 3:
            try:
                vertices.append((parts[1], int(parts[2])))
            except ValueError:
                raise ValueError(f"{path}:{ln}: levels must be an integer: {raw!r}")
        elif parts[0] == "edge" and len(parts) == 3:
            edges.append((parts[1], parts[2]))
        else:
            raise ValueError(f"{path}:{ln}: expected 'var NAME LEVELS' or 'edge A B': {raw!r}")
    if not vertices:
        raise ValueError(f"{path}: no variable declarations found")
    return from_edge_list(vertices, edges)


def read_counts(path, graph: BidirectedGraph) -> ContingencyTable:
    levels = list(graph.levels)
    names = list(graph.names)
    counts = np.zeros(_tables.n_cells(levels), dtype=np.int64)
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [n for n in names + ["count"] if n not in header]
        if missing:
            raise ValueError(f"{path}: counts file is missing columns {missing}")
        for ln, row in enumerate(reader, start=2):
            try:
                cell = [int(row[n]) for n in names]
                value = int(row["count"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{ln}: malformed row {row!r}")
            for n, lv, k in zip(names, cell, levels):
                if not 1 <= lv <= k:
                    raise ValueError(f"{path}:{ln}: level {lv} of {n} outside 1..{k}")
            if value < 0:
                raise ValueError(f"{path}:{ln}: negative count")
            idx = int(_tables.cell_index(np.asarray(cell) - 1, levels))
            if idx in seen:
                raise ValueError(f"{path}:{ln}: duplicate cell {tuple(cell)}")
            seen.add(idx)
            counts[idx] = value
    return ContingencyTable(graph.vertices, counts)


def write_counts(path, table: ContingencyTable):
    names = [v.name for v in table.variables]
    levels = [v.levels for v in table.variables]
    grid = _tables.cell_levels(levels) + 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["count"])
        for i, count in enumerate(table.counts):
            writer.writerow([*map(int, grid[i]), int(count)])


def write_trace(path, trace: Trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(trace.labels) + ["logpost", "accepted"])
        for i in range(trace.n_draws):
            row = [f"{v:.17g}" for v in trace.lambdas[i]]
            row.append(f"{trace.log_posterior[i]:.17g}")
            row.append(f"{trace.accepted[i]:.17g}")
            writer.writerow(row)


def read_trace(path) -> Trace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-2:] != ["logpost", "accepted"]:
            raise ValueError(f"{path}: not a trace file (missing logpost/accepted columns)")
        labels = tuple(header[:-2])
        data = []
        for ln, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{ln}: expected {len(header)} fields")
            try:
                data.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}:{ln}: malformed number")
    if not data:
        raise ValueError(f"{path}: empty trace")
    arr = np.asarray(data)
    return Trace(labels, arr[:, :-2], arr[:, -1], arr[:, -2], float("nan"), {})


SUMMARY_COLUMNS = [
    "label", "mean", "sd", "mce_mean", "mce_sd", "ess", "ess_per_sec",
    "q2.5", "q50", "q97.5",
]


def write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for r in rows:
            writer.writerow(
                [r.label]
                + [
                    f"{v:.10g}"
                    for v in (r.mean, r.sd, r.mce_mean, r.mce_sd, r.ess,
                              r.ess_per_second, r.q2_5, r.q50, r.q97_5)
                ]
            )


def write_metadata(path, mapping: dict):
    lines = [f"{k} = {v}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_metadata(path) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        key, _, value = raw.partition("=")
        out[key.strip()] = value.strip()
    return out


def write_matrix(path, matrix, row_labels=None, col_labels=None):
    """CSV dump of a matrix with optional labels (scheme/Jacobian debugging)."""
    matrix = np.asarray(matrix)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if col_labels is not None:
            writer.writerow([""] + list(col_labels) if row_labels is not None else list(col_labels))
        for i in range(matrix.shape[0]):
            row = [f"{v:.17g}" for v in matrix[i]]
            if row_labels is not None:
                row = [str(row_labels[i])] + row
            writer.writerow(row)
