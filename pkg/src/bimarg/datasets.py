"""Bundled example data: the four-chain benchmark and the torus survey table."""

from __future__ import annotations

from importlib import resources

import numpy as np

from . import io
from .graphs import BidirectedGraph
from .model import ContingencyTable

__all__ = [
    "load_four_chain",
    "load_torus",
    "four_chain_truth",
    "data_path",
]


def data_path(name: str):
    """Filesystem path of a bundled data file (for CLI examples and tests)."""
    return resources.files("bimarg.data") / name


def load_four_chain() -> tuple[BidirectedGraph, ContingencyTable]:
    """Four-chain graph A-B-C-D with one simulated size-500 table."""
    graph = io.read_graph(data_path("chain4.graph"))
    table = io.read_counts(data_path("chain4_sim.csv"), graph)
    return graph, table


def load_torus() -> tuple[BidirectedGraph, ContingencyTable]:
    """Chain graph and counts for the mandibular-torus survey (N=541).

    Variable coding is described in the graph file; the chain runs
    age - incidence - sex - population.
    """
    graph = io.read_graph(data_path("torus.graph"))
    table = io.read_counts(data_path("torus.csv"), graph)
    return graph, table


def four_chain_truth() -> dict:
    """Generating interactions of the four-chain benchmark, by label.

    These are the non-intercept free interactions; the bundled
    ``chain4_sim.csv`` is one multinomial draw of size 500 from the joint
    distribution they define (the intercept is implied by normalisation,
    about -1.4025).
    """
    return {
        "lambda[AC].A(2)": -0.15,
        "lambda[AC].C(2)": 0.10,
        "lambda[AD].D(2)": 0.12,
        "lambda[BD].B(2)": -0.09,
        "lambda[ABD].AB(2,2)": -0.15,
        "lambda[ACD].CD(2,2)": 0.20,
        "lambda[ABCD].BC(2,2)": -0.30,
        "lambda[ABCD].ABC(2,2,2)": 0.15,
        "lambda[ABCD].BCD(2,2,2)": -0.10,
        "lambda[ABCD].ABCD(2,2,2,2)": 0.07,
    }
