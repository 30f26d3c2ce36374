"""Marginal log-linear parameterisation of a bi-directed graph model.

The interactions are ``lambda = C log(M P)`` where ``P`` is the joint cell
probability vector in canonical vec order (first declared variable changing
fastest), ``M`` stacks the marginalisation matrices of the scheme's marginal
tables, and ``C`` is the block-diagonal matrix of sum-to-zero log-linear
contrasts, one block per marginal, restricted to the interactions allocated
to that marginal.  The scheme also records which interactions the graph
constrains to zero (``K`` rows) and which are free.

One structural fact shapes the API: within the first marginal the intercept
is pinned by normalisation once the other interactions of that marginal are
fixed, so it is *not* a coordinate of the model.  ``free`` vectors carry it
(it is reported like any interaction) while ``param`` vectors - used by the
samplers and by :func:`invert_lambda` - exclude it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _tables
from .exceptions import (
    NonConvergenceError,
    NonpositiveProbabilityError,
    OrderDecomposabilityError,
    SchemeError,
)
from .graphs import BidirectedGraph

__all__ = [
    "LambdaLabel",
    "LambdaVector",
    "MarginalScheme",
    "build_marginal_scheme",
    "build_M",
    "build_C",
    "lambda_from_P",
    "invert_lambda",
    "PROB_FLOOR",
]

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LambdaLabel:
    """Identifies one interaction: its marginal, effect and level combination."""

    marginal: tuple[str, ...]
    effect: tuple[str, ...]
    levels: tuple[int, ...]

    def __str__(self) -> str:
        marg = "".join(self.marginal)
        if not self.effect:
            return f"lambda[{marg}].intercept"
        eff = "".join(self.effect)
        lev = ",".join(str(l) for l in self.levels)
        return f"lambda[{marg}].{eff}({lev})"


@dataclass
class LambdaVector:
    """Interaction values in the three bookkeeping layouts of a scheme.

    ``full`` has one entry per contrast row (zeros at the structurally
    constrained positions), ``free`` the non-constrained entries including the
    intercept, ``param`` the free entries excluding the intercept.
    """

    full: np.ndarray
    free: np.ndarray
    param: np.ndarray
    labels: tuple[LambdaLabel, ...]


def _sum_to_zero_block(levels: int) -> np.ndarray:
    """Design block for one variable: [[1, -1'], [1, I]]."""
    j = np.eye(levels)
    j[:, 0] = 1.0
    j[0, 1:] = -1.0
    return j


def _kron_chain(mats) -> np.ndarray:
    """Kronecker product with the *first* factor's index changing fastest."""
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(m, out)
    return out


class MarginalScheme:
    """Ordered marginals, effect allocation and the M / C / K matrices.

    Built by :func:`build_marginal_scheme`; treat instances as immutable.
    """

    def __init__(self, graph: BidirectedGraph, marginals, allocation):
        self.graph = graph
        self.marginals = tuple(tuple(m) for m in marginals)
        self.allocation = dict(allocation)
        self.levels = graph.levels
        self.n_cells = _tables.n_cells(self.levels)

        disconnected = {g for g in map(frozenset, graph.disconnected_sets())}
        labels: list[LambdaLabel] = []
        marginal_of_row: list[int] = []
        zero_rows: list[int] = []
        self._design = []  # per-marginal sum-to-zero design matrix X
        self._allocated_rows = []  # per-marginal row indices into X

        for m_idx, marg in enumerate(self.marginals):
            lv = [graph.vertices[graph.index(v)].levels for v in marg]
            x = _kron_chain([_sum_to_zero_block(k) for k in lv])
            decomp = _tables.cell_levels(lv)  # row -> per-variable column index
            rows = []
            for r in range(x.shape[0]):
                effect = tuple(v for v, c in zip(marg, decomp[r]) if c > 0)
                if self.allocation.get(effect) != m_idx:
                    continue
                rows.append(r)
                lev = tuple(int(c) + 1 for c in decomp[r] if c > 0)
                labels.append(LambdaLabel(marg, effect, lev))
                marginal_of_row.append(m_idx)
                if effect == marg and frozenset(marg) in disconnected:
                    zero_rows.append(len(labels) - 1)
            self._design.append(x)
            self._allocated_rows.append(np.asarray(rows, dtype=np.int64))

        self.labels = tuple(labels)
        self.marginal_of_row = np.asarray(marginal_of_row, dtype=np.int64)
        self.zero_rows = np.asarray(zero_rows, dtype=np.int64)
        n_rows = len(labels)
        if n_rows != self.n_cells:
            raise SchemeError("allocation did not cover every interaction exactly once")
        self.free_rows = np.setdiff1d(np.arange(n_rows), self.zero_rows)
        intercepts = [i for i, lab in enumerate(labels) if not lab.effect]
        self.intercept_row = int(intercepts[0])
        self.param_rows = self.free_rows[self.free_rows != self.intercept_row]

        self.M = build_M(self)
        self.C, self.K = build_C(self)

    # -- derived shapes ----------------------------------------------------

    @property
    def n_free(self) -> int:
        return len(self.free_rows)

    @property
    def n_param(self) -> int:
        return len(self.param_rows)

    @property
    def free_labels(self) -> tuple[LambdaLabel, ...]:
        return tuple(self.labels[i] for i in self.free_rows)

    @property
    def param_labels(self) -> tuple[LambdaLabel, ...]:
        return tuple(self.labels[i] for i in self.param_rows)

    @property
    def zero_set(self) -> tuple:
        """(marginal, effect) pairs constrained to zero."""
        return tuple(
            (self.labels[i].marginal, self.labels[i].effect) for i in self.zero_rows
        )

    def param_blocks(self) -> list[np.ndarray]:
        """Positions in the param vector grouped by marginal (for RW blocks)."""
        marg = self.marginal_of_row[self.param_rows]
        return [np.flatnonzero(marg == m) for m in np.unique(marg)]

    def free_to_param(self, free: np.ndarray) -> np.ndarray:
        pos = int(np.flatnonzero(self.free_rows == self.intercept_row)[0])
        return np.delete(np.asarray(free, dtype=float), pos)

    def design_matrix(self, m_idx: int) -> np.ndarray:
        """Sum-to-zero design matrix of the saturated model on marginal ``m_idx``."""
        return self._design[m_idx]

    def allocated_design_rows(self, m_idx: int) -> np.ndarray:
        """Row indices of marginal ``m_idx``'s design inverse retained in C."""
        return self._allocated_rows[m_idx]


def _graham_decomposable(sets) -> bool:
    """GYO reduction: True iff the hypergraph of ``sets`` is acyclic."""
    edges = [set(s) for s in sets]
    changed = True
    while changed:
        changed = False
        # drop edges contained in a later-or-larger edge (keep one copy of dupes)
        keep = []
        for i, e in enumerate(edges):
            contained = any(
                (e < f) or (e == f and j < i) for j, f in enumerate(edges) if j != i
            )
            if contained:
                changed = True
            else:
                keep.append(e)
        edges = keep
        # strip vertices occurring in exactly one edge
        counts: dict = {}
        for e in edges:
            for v in e:
                counts[v] = counts.get(v, 0) + 1
        for e in edges:
            lone = {v for v in e if counts[v] == 1}
            if lone:
                e -= lone
                changed = True
        edges = [e for e in edges if e]
    return not edges


def build_marginal_scheme(graph: BidirectedGraph) -> MarginalScheme:
    """Derive the marginal log-linear scheme encoded by a bi-directed graph.

    The marginals are the disconnected sets in hierarchical order
    (cardinality, then lexicographic by declaration order) with the full
    vertex set appended when missing; every effect is allocated to the first
    marginal containing it; for each disconnected-set marginal its own
    highest-order interaction is constrained to zero.  The ordering is
    required to be order decomposable, which guarantees a rectangular
    (variation independent) space for the free interactions.
    """
    marginals = [tuple(m) for m in graph.disconnected_sets()]
    full = graph.names
    if full not in marginals:
        marginals.append(full)

    # hierarchical by construction: a superset can never precede a subset
    for i, m in enumerate(marginals):
        for later in marginals[i + 1 :]:
            if set(later) <= set(m):
                raise SchemeError("marginal ordering is not hierarchical")

    for k in range(1, len(marginals) + 1):
        prefix = marginals[:k]
        maxima = [s for s in prefix if not any(set(s) < set(t) for t in prefix)]
        if not _graham_decomposable(maxima):
            raise OrderDecomposabilityError(
                "marginal ordering is not order decomposable: maxima of the first "
                f"{k} marginals {['.'.join(s) for s in maxima]} form a cyclic hypergraph"
            )

    allocation = {}
    for r in range(0, len(full) + 1):
        for effect in itertools.combinations(full, r):
            for m_idx, marg in enumerate(marginals):
                if set(effect) <= set(marg):
                    allocation[effect] = m_idx
                    break
    return MarginalScheme(graph, marginals, allocation)


def build_M(scheme: MarginalScheme, graph: BidirectedGraph | None = None) -> np.ndarray:
    """Stacked marginalisation matrix: ``M @ P`` lists every marginal table.

    Each marginal block is the Kronecker chain of identity blocks (variable in
    the marginal) and all-ones rows (variable summed out), ordered so the
    first declared variable changes fastest, matching the vec convention.
    """
    graph = graph or scheme.graph
    blocks = []
    for marg in scheme.marginals:
        mats = []
        for v in graph.vertices:
            if v.name in marg:
                mats.append(np.eye(v.levels))
            else:
                mats.append(np.ones((1, v.levels)))
        blocks.append(_kron_chain(mats))
    return np.vstack(blocks)


def build_C(scheme: MarginalScheme, graph: BidirectedGraph | None = None):
    """Block-diagonal contrast matrix and its zero-constrained rows ``K``.

    Per marginal the block holds the rows of the inverted sum-to-zero design
    for the effects allocated there; the inverse of a Kronecker chain is the
    chain of inverses, which keeps the construction exact and cheap.
    """
    graph = graph or scheme.graph
    blocks = []
    for m_idx, marg in enumerate(scheme.marginals):
        lv = [graph.vertices[graph.index(v)].levels for v in marg]
        x_inv = _kron_chain([np.linalg.inv(_sum_to_zero_block(k)) for k in lv])
        blocks.append(x_inv[scheme.allocated_design_rows(m_idx), :])
    c = scipy.linalg.block_diag(*blocks)
    k = c[scheme.zero_rows, :]
    return c, k


def lambda_from_P(scheme: MarginalScheme, P) -> LambdaVector:
    """Marginal log-linear interactions of a joint probability vector.

    ``P`` must be strictly positive, sum to one and follow the canonical vec
    order.  Entries of ``M @ P`` at or below the probability floor raise
    :class:`NonpositiveProbabilityError` rather than being clipped.
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (scheme.n_cells,):
        raise ValueError(f"P must have length {scheme.n_cells}, got {P.shape}")
    mp = scheme.M @ P
    if np.min(mp) <= PROB_FLOOR:
        raise NonpositiveProbabilityError("marginal probability at or below floor")
    full = scheme.C @ np.log(mp)
    free = full[scheme.free_rows]
    param = full[scheme.param_rows]
    return LambdaVector(full, free, param, scheme.free_labels)


def invert_lambda(
    scheme: MarginalScheme,
    lambda_param,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> np.ndarray:
    """Joint probability vector realising the given free interactions.

    Solves ``C log(M P) = lambda_full`` for ``P`` on the simplex, where
    ``lambda_full`` embeds ``lambda_param`` at the non-intercept free rows and
    zeros at the constrained rows; the intercept row is excluded from the
    residual because normalisation determines it.  Damped Newton iteration on
    free log-cells (last cell as reference), started from the uniform table
    unless ``x0`` supplies a warm start.

    Raises :class:`NonConvergenceError` when the iteration budget or step
    search is exhausted; callers treat such a target as out of support.
    """
    lam = np.asarray(lambda_param, dtype=float)
    if lam.shape != (scheme.n_param,):
        raise ValueError(
            f"expected {scheme.n_param} non-intercept free interactions, got {lam.shape}; "
            "the intercept is implied by normalisation and must not be supplied"
        )
    n = scheme.n_cells
    target = np.zeros(len(scheme.labels))
    target[scheme.param_rows] = lam
    rows = np.setdiff1d(np.arange(len(scheme.labels)), [scheme.intercept_row])
    c_res = scheme.C[rows, :]
    t_res = target[rows]

    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        theta = np.log(x0[:-1]) - np.log(x0[-1])
    else:
        theta = np.zeros(n - 1)

    def softmax(th):
        z = np.concatenate([th, [0.0]])
        z -= z.max()
        e = np.exp(z)
        return e / e.sum()

    def residual(th):
        p = softmax(th)
        mp = scheme.M @ p
        return c_res @ np.log(np.maximum(mp, PROB_FLOOR)) - t_res, p, mp

    r, p, mp = residual(theta)
    for _ in range(max_iter):
        if np.max(np.abs(r)) < tol:
            return p
        dp = np.diag(p)[:, :-1] - np.outer(p, p[:-1])
        jac = c_res @ ((scheme.M / mp[:, None]) @ dp)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        norm0, scale = np.max(np.abs(r)), 1.0
        for _ in range(30):
            r_new, p_new, mp_new = residual(theta + scale * step)
            if np.max(np.abs(r_new)) < norm0:
                theta, r, p, mp = theta + scale * step, r_new, p_new, mp_new
                break
            scale *= 0.5
        else:
            raise NonConvergenceError("step search failed to reduce the residual")
    if np.max(np.abs(r)) < tol:
        return p
    raise NonConvergenceError(f"no convergence within {max_iter} iterations")
