"""scikit-learn style front end for posterior sampling.

``MarginalModelSampler`` wraps the functional core in the familiar
``__init__(params) / fit(X) / fitted attributes`` shape so it composes with
``sklearn.base.clone``, grid utilities and pipelines that only call ``fit``.
``X`` may be raw categorical observations (one row per unit, 1-based level
codes, columns in the graph's declared order), a flat vector of cell counts
in canonical vec order, or a ready :class:`~bimarg.model.ContingencyTable`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .diagnostics import summarize
from .graphs import BidirectedGraph
from .model import ContingencyTable, PriorSpec
from .parameterization import build_marginal_scheme
from .samplers import ChainConfig, merge_traces, run_chains

__all__ = ["MarginalModelSampler", "as_contingency_table"]


def as_contingency_table(X, graph: BidirectedGraph) -> ContingencyTable:
    """Validate and convert estimator input into a contingency table."""
    if isinstance(X, ContingencyTable):
        if tuple(v.name for v in X.variables) != graph.names:
            raise ValueError("table variables do not match the graph")
        return X
    arr = np.asarray(X)
    if arr.ndim == 1:
        return ContingencyTable(graph.vertices, arr)
    if arr.ndim == 2:
        return ContingencyTable.from_observations(arr, graph.vertices)
    raise ValueError("X must be a counts vector, an observation matrix or a ContingencyTable")


class MarginalModelSampler(BaseEstimator):
    """Posterior sampler for the free interactions of a bi-directed graph model.

    Parameters mirror :class:`~bimarg.samplers.ChainConfig` plus the graph and
    chain orchestration.  After :meth:`fit` the posterior draws are in
    ``trace_`` (all chains merged) and ``traces_`` (per chain), with
    ``summary_``, ``posterior_mean_`` and ``acceptance_rate_`` derived.

    Example
    -------
    >>> from bimarg import datasets
    >>> graph, table = datasets.load_four_chain()
    >>> est = MarginalModelSampler(graph, iterations=2000, burn_in=500, seed=1)
    >>> est.fit(table).posterior_mean_["lambda[ABCD].BC(2,2)"]  # doctest: +SKIP
    -0.32
    """

    def __init__(
        self,
        graph=None,
        algorithm="paa",
        iterations=11000,
        burn_in=1000,
        prior="dellaportas_forster",
        sigma2=10.0,
        pseudo_prior_alpha=1.0,
        latent_levels=3,
        seed=0,
        chains=1,
        threads=1,
        rw_scales=0.1,
        paa_stage1_iterations=None,
        paa_reorder="permute",
    ):
        self.graph = graph
        self.algorithm = algorithm
        self.iterations = iterations
        self.burn_in = burn_in
        self.prior = prior
        self.sigma2 = sigma2
        self.pseudo_prior_alpha = pseudo_prior_alpha
        self.latent_levels = latent_levels
        self.seed = seed
        self.chains = chains
        self.threads = threads
        self.rw_scales = rw_scales
        self.paa_stage1_iterations = paa_stage1_iterations
        self.paa_reorder = paa_reorder

    def _chain_config(self) -> ChainConfig:
        return ChainConfig(
            algorithm=self.algorithm,
            iterations=self.iterations,
            burn_in=self.burn_in,
            seed=self.seed,
            prior=PriorSpec(
                kind=self.prior,
                sigma2=self.sigma2,
                pseudo_prior_alpha=self.pseudo_prior_alpha,
            ),
            latent_levels=self.latent_levels,
            rw_scales=self.rw_scales,
            paa_stage1_iterations=self.paa_stage1_iterations,
            paa_reorder=self.paa_reorder,
        )

    def fit(self, X, y=None):
        if not isinstance(self.graph, BidirectedGraph):
            raise ValueError("graph must be a BidirectedGraph")
        table = as_contingency_table(X, self.graph)
        cfg = self._chain_config()
        self.scheme_ = build_marginal_scheme(self.graph)
        self.traces_ = run_chains(cfg, table, self.graph, chains=self.chains,
                                  threads=self.threads)
        self.trace_ = merge_traces(self.traces_)
        self.labels_ = list(self.trace_.labels)
        self.summary_ = summarize(self.trace_)
        self.posterior_mean_ = {r.label: r.mean for r in self.summary_}
        self.acceptance_rate_ = self.trace_.meta.get(
            "acceptance_rate", self.trace_.acceptance_rate
        )
        self.n_draws_ = self.trace_.n_draws
        return self
