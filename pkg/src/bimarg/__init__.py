"""Bayesian marginal log-linear models on bi-directed graphs.

A bi-directed graph over categorical variables encodes marginal
independencies; the model constrains the corresponding marginal log-linear
interactions (log-odds contrasts of marginal tables) to zero and this package
samples the posterior of the free ones.  Sampling happens on the probability
tables of a Markov equivalent latent-variable DAG, so every draw satisfies
the independence constraints exactly, and moves are accepted in interaction
space through an analytic change-of-variables Jacobian.
"""

from .diagnostics import SummaryRow, ess, mce_batch_means, reorder, summarize
from .estimator import MarginalModelSampler, as_contingency_table
from .graphs import AugmentedDag, BidirectedGraph, Variable, d_separated, from_edge_list
from .jacobian import (
    JacobianReport,
    XiSelector,
    delta_matrix,
    jacobian_matrix,
    log_abs_det_jacobian,
    select_xi,
)
from .model import (
    AugmentedTable,
    ContingencyTable,
    PriorSpec,
    ProbParams,
    joint_from_params,
    log_prior_lambda,
    multinomial_loglik,
    pseudo_prior_logdensity,
    sample_conditional_dirichlet,
    sample_latent_split,
    simulate_table,
)
from .parameterization import (
    LambdaLabel,
    LambdaVector,
    MarginalScheme,
    build_C,
    build_M,
    build_marginal_scheme,
    invert_lambda,
    lambda_from_P,
)
from .samplers import (
    ChainConfig,
    Trace,
    gibbs_run,
    merge_traces,
    paa_run,
    pbis_run,
    run_chain,
    run_chains,
    rw_lambda_run,
    rw_pi_run,
)

__version__ = "0.1.0"

__all__ = [
    "Variable", "BidirectedGraph", "AugmentedDag", "from_edge_list", "d_separated",
    "LambdaLabel", "LambdaVector", "MarginalScheme", "build_marginal_scheme",
    "build_M", "build_C", "lambda_from_P", "invert_lambda",
    "ContingencyTable", "ProbParams", "AugmentedTable", "PriorSpec",
    "joint_from_params", "multinomial_loglik", "log_prior_lambda",
    "pseudo_prior_logdensity", "sample_latent_split", "sample_conditional_dirichlet",
    "simulate_table",
    "XiSelector", "JacobianReport", "delta_matrix", "jacobian_matrix",
    "log_abs_det_jacobian", "select_xi",
    "ChainConfig", "Trace", "gibbs_run", "pbis_run", "paa_run",
    "rw_lambda_run", "rw_pi_run", "run_chain", "run_chains", "merge_traces",
    "SummaryRow", "ess", "mce_batch_means", "reorder", "summarize",
    "MarginalModelSampler", "as_contingency_table",
    "datasets",
]

from . import datasets  # noqa: E402  (re-export for convenience)
