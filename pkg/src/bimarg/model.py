"""Probability side of the model: tables, DAG parameters, likelihoods, priors.

The augmented DAG factorises the joint over observed and latent variables
into conditional probability tables (:class:`ProbParams`); marginalising the
latents yields the observed joint ``p``.  This module holds that machinery
plus the multinomial likelihood, the priors on the free interactions, the
Dirichlet pseudo-prior, the latent-split and conditional-Dirichlet draws the
samplers are built from, and table simulation.

Everything is a pure function of its inputs and an explicit RNG stream, so
chains can run concurrently without shared state.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from . import _tables
from .exceptions import NonpositiveProbabilityError
from .graphs import AugmentedDag, Variable
from .parameterization import PROB_FLOOR, LambdaVector, MarginalScheme

__all__ = [
    "ContingencyTable",
    "ProbParams",
    "AugmentedTable",
    "PriorSpec",
    "ModelContext",
    "context_for",
    "joint_from_params",
    "multinomial_loglik",
    "LambdaPrior",
    "log_prior_lambda",
    "pseudo_prior_logdensity",
    "conditional_dirichlet_logpdf",
    "sample_latent_split",
    "sample_conditional_dirichlet",
    "simulate_table",
    "initial_probparams",
]


@dataclass
class ContingencyTable:
    """Observed cell counts in canonical vec order."""

    variables: tuple[Variable, ...]
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        expected = _tables.n_cells([v.levels for v in self.variables])
        if self.counts.shape != (expected,):
            raise ValueError(f"counts must have length {expected}, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_observations(cls, X, variables) -> "ContingencyTable":
        """Cross-tabulate an (N, n_variables) matrix of 1-based levels."""
        X = np.asarray(X, dtype=np.int64)
        variables = tuple(variables)
        levels = [v.levels for v in variables]
        if X.ndim != 2 or X.shape[1] != len(variables):
            raise ValueError(f"expected observations with {len(variables)} columns")
        if np.any(X < 1) or np.any(X > np.asarray(levels)[None, :]):
            raise ValueError("observation levels out of range")
        idx = _tables.cell_index(X - 1, levels)
        counts = np.bincount(idx, minlength=_tables.n_cells(levels))
        return cls(variables, counts)


class ModelContext:
    """Precomputed index arrays for one augmented DAG.

    Shared, read-only, and keyed by the DAG instance; build once per run and
    reuse across iterations.
    """

    def __init__(self, dag: AugmentedDag):
        self.dag = dag
        self.names = dag.names
        self.levels = [v.levels for v in dag.vertices]
        self.n_obs_vars = len(dag.observed)
        self.obs_levels = self.levels[: self.n_obs_vars]
        self.n_obs = _tables.n_cells(self.obs_levels)
        self.n_lat = _tables.n_cells(self.levels[self.n_obs_vars :])
        self.n_aug = self.n_obs * self.n_lat
        grid = _tables.cell_levels(self.levels)  # (n_aug, n_vertices), 0-based
        self.aug_grid = grid
        self.obs_grid = grid[: self.n_obs, : self.n_obs_vars]

        pos = {n: i for i, n in enumerate(self.names)}
        self.parent_idx = [
            [pos[p] for p in dag.parents.get(n, ())] for n in self.names
        ]
        self.n_cfg = []
        self.flat_keys = []  # per vertex: (cfg * levels + level) at every aug cell
        self.cfg_keys = []
        self.pi_slices = []
        offset = 0
        for k, name in enumerate(self.names):
            pidx = self.parent_idx[k]
            plev = [self.levels[j] for j in pidx]
            ncfg = _tables.n_cells(plev)
            cfg = np.zeros(self.n_aug, dtype=np.int64)
            stride = 1
            for j, lv in zip(pidx, plev):
                cfg += grid[:, j] * stride
                stride *= lv
            lv_k = self.levels[k]
            self.n_cfg.append(ncfg)
            self.cfg_keys.append(cfg)
            self.flat_keys.append(cfg * lv_k + grid[:, k])
            self.pi_slices.append(slice(offset, offset + ncfg * (lv_k - 1)))
            offset += ncfg * (lv_k - 1)
        self.d_pi = offset

        # aggregation keys for the latent-parent joints needed by the Jacobian
        lat_pos = list(range(self.n_obs_vars, len(self.names)))
        obs_idx = np.arange(self.n_aug, dtype=np.int64) % self.n_obs
        self.obs_idx_aug = obs_idx
        self.latent_subset_keys = {}
        for subset in {tuple(j for j in self.parent_idx[k] if j in lat_pos)
                       for k in range(self.n_obs_vars)} | {(j,) for j in lat_pos}:
            key = np.zeros(self.n_aug, dtype=np.int64)
            stride = 1
            for j in subset:
                key += grid[:, j] * stride
                stride *= self.levels[j]
            self.latent_subset_keys[subset] = (key * self.n_obs + obs_idx, stride)

    def latent_margin(self, p_aug: np.ndarray, subset: tuple) -> np.ndarray:
        """P(observed cell, latents in ``subset``) as an (n_cfg, n_obs) array."""
        key, ncfg = self.latent_subset_keys[subset]
        return np.bincount(key, weights=p_aug, minlength=ncfg * self.n_obs).reshape(
            ncfg, self.n_obs
        )


_CTX_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def context_for(dag: AugmentedDag) -> ModelContext:
    ctx = _CTX_CACHE.get(dag)
    if ctx is None:
        ctx = ModelContext(dag)
        _CTX_CACHE[dag] = ctx
    return ctx


@dataclass
class ProbParams:
    """Conditional probability tables of the augmented DAG.

    ``tables[k]`` is an ``(n_parent_configs, levels)`` array for the k-th
    vertex in canonical order (observed declaration order, then latents);
    parent configurations are enumerated with the first parent (canonical
    order) changing fastest, and every row is a strictly positive
    distribution.  The vectorisation lists, vertex by vertex and
    configuration by configuration, the first ``levels - 1`` entries of each
    row; this ordering is a bit-exact contract (the dimension-balancing
    coordinates are its tail).
    """

    dag: AugmentedDag
    tables: tuple

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([t[:, :-1].ravel() for t in self.tables])

    @classmethod
    def from_vector(cls, dag: AugmentedDag, vec) -> "ProbParams":
        ctx = context_for(dag)
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (ctx.d_pi,):
            raise ValueError(f"expected vector of length {ctx.d_pi}, got {vec.shape}")
        tabs = []
        for k, lv in enumerate(ctx.levels):
            free = vec[ctx.pi_slices[k]].reshape(ctx.n_cfg[k], lv - 1)
            t = np.empty((ctx.n_cfg[k], lv))
            t[:, :-1] = free
            t[:, -1] = 1.0 - free.sum(axis=1)
            tabs.append(t)
        return cls(dag, tuple(tabs))


@dataclass
class AugmentedTable:
    """Counts over the augmented (observed x latent) table."""

    dag: AugmentedDag
    counts: np.ndarray

    def observed_margin(self) -> np.ndarray:
        ctx = context_for(self.dag)
        return self.counts.reshape(ctx.n_lat, ctx.n_obs).sum(axis=0)


PRIOR_KINDS = ("iid_normal", "dellaportas_forster", "probability_flat")


@dataclass
class PriorSpec:
    """Prior on the free interactions plus the Dirichlet pseudo-prior weight.

    ``probability_flat`` is the prior induced by a uniform density on the
    probability parameters; under it the prior and Jacobian terms of the
    acceptance ratios cancel exactly, which is the conjugate-oracle setting.
    """

    kind: str = "dellaportas_forster"
    sigma2: float = 10.0
    pseudo_prior_alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}; choose from {PRIOR_KINDS}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.pseudo_prior_alpha <= 0:
            raise ValueError("pseudo_prior_alpha must be positive")


def joint_from_params(pp: ProbParams, dag: AugmentedDag | None = None, ctx=None):
    """Joint probabilities of the augmented table and the observed margin.

    ``p_aug`` multiplies each vertex's conditional probability along the DAG
    factorisation; ``p`` sums it over the latent level combinations.  Both
    follow the canonical vec order.
    """
    ctx = ctx or context_for(dag or pp.dag)
    p_aug = np.ones(ctx.n_aug)
    for k, t in enumerate(pp.tables):
        p_aug *= t.ravel()[ctx.flat_keys[k]]
    p = p_aug.reshape(ctx.n_lat, ctx.n_obs).sum(axis=0)
    return p_aug, p


def multinomial_loglik(n, p) -> float:
    """Multinomial log likelihood including the combinatorial coefficient.

    Keeping the coefficient makes values for different augmented tables
    absolutely comparable, which the independence sampler's ratio needs.
    """
    counts = n.counts if isinstance(n, (ContingencyTable, AugmentedTable)) else np.asarray(n)
    p = np.asarray(p, dtype=float)
    if counts.shape != p.shape:
        raise ValueError("counts and probabilities must have matching length")
    if np.min(p) <= PROB_FLOOR:
        raise NonpositiveProbabilityError("probability at or below floor in likelihood")
    total = counts.sum()
    return float(
        gammaln(total + 1) - gammaln(counts + 1).sum() + counts @ np.log(p)
    )


class LambdaPrior:
    """Evaluator for the prior density of the free interactions.

    For the Dellaportas-Forster kind the per-marginal covariance is
    ``2 |I_M| (X' X)^{-1}`` of the marginal's sum-to-zero design, restricted
    to the rows allocated to that marginal; with sum-to-zero coding the prior
    mean is zero everywhere except the intercept, whose mean is
    ``log(nbar) - log N`` with ``nbar = N / |I|``.  The intercept is a derived
    quantity, so only the non-intercept rows enter :meth:`logpdf`, the density
    used inside acceptance ratios; :meth:`logpdf_free` includes it for
    completeness.
    """

    def __init__(self, spec: PriorSpec, scheme: MarginalScheme, N: int, nbar: float | None = None):
        self.spec = spec
        self.scheme = scheme
        self.N = int(N)
        self.nbar = float(nbar) if nbar is not None else self.N / scheme.n_cells
        self.is_probability_flat = spec.kind == "probability_flat"
        self.intercept_mean = float(np.log(self.nbar) - np.log(self.N)) if self.N else 0.0
        if spec.kind != "dellaportas_forster":
            self.intercept_var = spec.sigma2
            return
        self._blocks = []  # (positions in param vector, cholesky, logdet, dim)
        self._free_blocks = []
        param_pos = {row: i for i, row in enumerate(scheme.param_rows)}
        free_pos = {row: i for i, row in enumerate(scheme.free_rows)}
        row = 0
        self.intercept_var = None
        for m_idx in range(len(scheme.marginals)):
            x = scheme.design_matrix(m_idx)
            cov = 2 * x.shape[0] * np.linalg.inv(x.T @ x)
            rows = scheme.allocated_design_rows(m_idx)
            globals_ = np.arange(row, row + len(rows))
            row += len(rows)
            for positions, store in (
                ([param_pos.get(g) for g in globals_], self._blocks),
                ([free_pos.get(g) for g in globals_], self._free_blocks),
            ):
                sel = [i for i, p in enumerate(positions) if p is not None]
                if not sel:
                    continue
                sub = cov[np.ix_(rows[sel], rows[sel])]
                chol = np.linalg.cholesky(sub)
                logdet = 2 * np.log(np.diag(chol)).sum()
                means = np.array(
                    [
                        self.intercept_mean if globals_[i] == scheme.intercept_row else 0.0
                        for i in sel
                    ]
                )
                store.append(([positions[i] for i in sel], chol, logdet, means))
            if scheme.intercept_row in globals_:
                local = int(np.flatnonzero(globals_ == scheme.intercept_row)[0])
                self.intercept_var = float(cov[rows[local], rows[local]])

    def logpdf(self, param: np.ndarray) -> float:
        """Log prior density of the non-intercept free interactions."""
        x = np.asarray(param, dtype=float)
        if self.is_probability_flat:
            return 0.0
        if self.spec.kind == "iid_normal":
            s2 = self.spec.sigma2
            return float(-0.5 * x @ x / s2 - 0.5 * len(x) * np.log(2 * np.pi * s2))
        return self._mvn_sum(x, self._blocks)

    def logpdf_free(self, free: np.ndarray) -> float:
        """Log prior density of the full free vector, intercept included."""
        x = np.asarray(free, dtype=float)
        if self.is_probability_flat:
            return 0.0
        if self.spec.kind == "iid_normal":
            ipos = int(np.flatnonzero(self.scheme.free_rows == self.scheme.intercept_row)[0])
            centered = x.copy()
            centered[ipos] -= self.intercept_mean
            s2 = self.spec.sigma2
            return float(
                -0.5 * centered @ centered / s2 - 0.5 * len(x) * np.log(2 * np.pi * s2)
            )
        return self._mvn_sum(x, self._free_blocks)

    @staticmethod
    def _mvn_sum(x, blocks) -> float:
        out = 0.0
        for positions, chol, logdet, means in blocks:
            v = x[positions] - means
            y = solve_triangular(chol, v, lower=True)
            out += -0.5 * (y @ y) - 0.5 * logdet - 0.5 * len(v) * np.log(2 * np.pi)
        return float(out)


def log_prior_lambda(lv, prior: PriorSpec, scheme: MarginalScheme, N: int, nbar=None) -> float:
    """Prior log density of an interaction vector.

    Accepts a :class:`LambdaVector`, a free-length vector (intercept
    included) or a param-length vector (intercept excluded) and evaluates the
    matching marginalised density.
    """
    ev = LambdaPrior(prior, scheme, N, nbar)
    if isinstance(lv, LambdaVector):
        return ev.logpdf_free(lv.free)
    x = np.asarray(lv, dtype=float)
    if x.shape == (scheme.n_free,):
        return ev.logpdf_free(x)
    if x.shape == (scheme.n_param,):
        return ev.logpdf(x)
    raise ValueError(f"expected a vector of length {scheme.n_free} or {scheme.n_param}")


def pseudo_prior_logdensity(pp: ProbParams, alpha: float) -> float:
    """Product-Dirichlet pseudo-prior log density at the probability tables."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    out = 0.0
    for t in pp.tables:
        if np.min(t) <= 0.0:
            raise NonpositiveProbabilityError("degenerate conditional distribution")
        k = t.shape[1]
        const = gammaln(k * alpha) - k * gammaln(alpha)
        out += t.shape[0] * const + (alpha - 1.0) * np.log(t).sum()
    return float(out)


def counts_by_vertex(counts_aug: np.ndarray, ctx: ModelContext) -> list:
    """Sufficient statistics of an augmented table per (vertex, parent config)."""
    out = []
    for k, lv in enumerate(ctx.levels):
        flat = np.bincount(
            ctx.flat_keys[k], weights=counts_aug, minlength=ctx.n_cfg[k] * lv
        )
        out.append(flat.reshape(ctx.n_cfg[k], lv))
    return out


def conditional_dirichlet_logpdf(pp: ProbParams, counts, alpha: float, ctx=None) -> float:
    """Log density of the conditional-posterior Dirichlet proposal at ``pp``.

    ``counts`` is an augmented count vector or the per-vertex sufficient
    statistics from :func:`counts_by_vertex`.
    """
    ctx = ctx or context_for(pp.dag)
    if isinstance(counts, AugmentedTable):
        counts = counts.counts
    if isinstance(counts, np.ndarray):
        counts = counts_by_vertex(counts, ctx)
    out = 0.0
    for t, c in zip(pp.tables, counts):
        a = alpha + c
        out += (
            gammaln(a.sum(axis=1)).sum()
            - gammaln(a).sum()
            + ((a - 1.0) * np.log(t)).sum()
        )
    return float(out)


def sample_latent_split(
    pp: ProbParams, n, dag: AugmentedDag | None = None, rng=None, ctx=None, p_aug=None, p=None
) -> AugmentedTable:
    """Distribute each observed cell count over the latent level combinations.

    The split is multinomial with probabilities ``p_aug(i, .) / p(i)``, so the
    observed margin is preserved exactly draw by draw.
    """
    dag = dag or pp.dag
    ctx = ctx or context_for(dag)
    counts = n.counts if isinstance(n, ContingencyTable) else np.asarray(n)
    if ctx.n_lat == 1:
        return AugmentedTable(dag, counts.astype(np.int64).copy())
    if p_aug is None or p is None:
        p_aug, p = joint_from_params(pp, dag, ctx)
    cond = (p_aug.reshape(ctx.n_lat, ctx.n_obs) / p[None, :]).T
    cond /= cond.sum(axis=1, keepdims=True)
    split = rng.multinomial(counts, cond)  # (n_obs, n_lat)
    return AugmentedTable(dag, split.T.ravel().astype(np.int64))


def sample_conditional_dirichlet(
    nA, dag: AugmentedDag | None = None, alpha: float = 1.0, rng=None, ctx=None
) -> ProbParams:
    """Draw probability tables from their conjugate conditional posterior.

    Every (vertex, parent configuration) row is Dirichlet(alpha + counts);
    a draw touching the probability floor is redrawn (at most 100 times) so
    the tables stay inside the open simplex.
    """
    if isinstance(nA, AugmentedTable):
        dag = dag or nA.dag
        nA = nA.counts
    ctx = ctx or context_for(dag)
    stats = counts_by_vertex(np.asarray(nA, dtype=float), ctx)
    tabs = []
    for c in stats:
        a = alpha + c
        g = rng.standard_gamma(a)
        t = g / g.sum(axis=1, keepdims=True)
        for _ in range(100):
            bad = np.flatnonzero(t.min(axis=1) <= PROB_FLOOR)
            if bad.size == 0:
                break
            g = rng.standard_gamma(a[bad])
            t[bad] = g / g.sum(axis=1, keepdims=True)
        else:
            raise NonpositiveProbabilityError("Dirichlet draw pinned to the floor")
        tabs.append(t)
    return ProbParams(dag, tuple(tabs))


def simulate_table(p, N: int, rng) -> np.ndarray:
    """One multinomial table of total ``N`` from cell probabilities ``p``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    p = np.asarray(p, dtype=float)
    return rng.multinomial(int(N), p / p.sum()).astype(np.int64)


def initial_probparams(counts_obs, dag: AugmentedDag, alpha: float, rng, ctx=None) -> ProbParams:
    """Starting tables: one conjugate draw given the smoothed observed table.

    Counts get +0.5 smoothing and are split uniformly across latent levels,
    which starts every chain in a high-likelihood region without touching the
    stationary law.
    """
    ctx = ctx or context_for(dag)
    counts = counts_obs.counts if isinstance(counts_obs, ContingencyTable) else counts_obs
    smoothed = np.tile((np.asarray(counts, dtype=float) + 0.5) / ctx.n_lat, ctx.n_lat)
    return sample_conditional_dirichlet(smoothed, dag, alpha, rng, ctx)
