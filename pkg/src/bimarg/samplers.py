"""MCMC samplers for the posterior of the free marginal log-linear interactions.

Five algorithms share the chain bookkeeping:

* ``gibbs`` - the conjugate data-augmentation sampler on the probability
  tables (latent split, then conditional Dirichlet rows); interactions are a
  by-product and the lambda prior plays no role.
* ``pbis`` - probability-based independence sampler: one latent-split +
  conditional-Dirichlet proposal per iteration, accepted with the augmented
  likelihood x prior x proposal-density x Jacobian ratio.
* ``paa`` - prior-adjustment algorithm: a first-stage Gibbs run, reordered,
  feeds an independence chain whose acceptance is the prior ratio times the
  pseudo-prior and Jacobian ratios.
* ``rw_lambda`` / ``rw_pi`` - random-walk comparators on the interaction
  blocks and on the logits of the probability tables.

Chains are reproducible bit for bit: all randomness flows through one
counter-based Philox stream keyed by ``(seed, chain_index)``.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    NonConvergenceError,
    NonpositiveProbabilityError,
    SingularJacobianError,
    StageExhaustedError,
)
from .graphs import BidirectedGraph
from .jacobian import XiSelector, jacobian_matrix, select_xi
from .model import (
    ContingencyTable,
    LambdaPrior,
    PriorSpec,
    ProbParams,
    conditional_dirichlet_logpdf,
    context_for,
    counts_by_vertex,
    initial_probparams,
    joint_from_params,
    multinomial_loglik,
    pseudo_prior_logdensity,
    sample_conditional_dirichlet,
    sample_latent_split,
)
from .parameterization import build_marginal_scheme, invert_lambda, lambda_from_P

__all__ = [
    "ALGORITHMS",
    "ChainConfig",
    "Trace",
    "gibbs_run",
    "pbis_run",
    "paa_run",
    "rw_lambda_run",
    "rw_pi_run",
    "run_chain",
    "run_chains",
    "merge_traces",
]

ALGORITHMS = ("gibbs", "pbis", "paa", "rw_lambda", "rw_pi")
RW_TARGET_RATE = 0.35


@dataclass
class ChainConfig:
    """Configuration of one chain; see module docstring for the algorithms."""

    algorithm: str = "paa"
    iterations: int = 11000
    burn_in: int = 1000
    seed: int = 0
    prior: PriorSpec = field(default_factory=PriorSpec)
    latent_levels: int = 3
    rw_scales: float | tuple = 0.1
    paa_stage1_iterations: int | None = None
    paa_reorder: str = "permute"
    chain_index: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        mode, k = self.reorder_mode()
        if mode not in ("permute", "thin") or (mode == "thin" and k < 1):
            raise ValueError(f"paa_reorder must be 'permute' or 'thin:K', got {self.paa_reorder!r}")
        scales = np.atleast_1d(np.asarray(self.rw_scales, dtype=float))
        if np.any(scales < 0):
            raise ValueError("rw_scales must be nonnegative")

    def reorder_mode(self):
        if self.paa_reorder == "permute":
            return "permute", None
        if self.paa_reorder.startswith("thin"):
            _, _, k = self.paa_reorder.partition(":")
            return "thin", int(k or 1)
        return self.paa_reorder, None


@dataclass
class Trace:
    """Post burn-in draws of the free interactions plus chain bookkeeping.

    ``lambdas`` has one column per free interaction (intercept included, in
    scheme order); ``accepted`` holds the per-iteration acceptance indicator
    (for the block random walks: the fraction of accepted block moves).
    """

    labels: tuple
    lambdas: np.ndarray
    accepted: np.ndarray
    log_posterior: np.ndarray
    wall_seconds: float
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.lambdas.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    @property
    def iterations_per_sec(self) -> float:
        return self.meta.get("iterations", self.n_draws) / self.wall_seconds


class _Runtime:
    """Everything a chain needs, assembled once."""

    def __init__(self, cfg: ChainConfig, table, graph: BidirectedGraph):
        self.cfg = cfg
        self.graph = graph
        if isinstance(table, ContingencyTable):
            if tuple(v.name for v in table.variables) != graph.names or tuple(
                v.levels for v in table.variables
            ) != graph.levels:
                raise ValueError("table variables do not match the graph declaration")
            self.table = table
        else:
            self.table = ContingencyTable(graph.vertices, np.asarray(table))
        self.scheme = build_marginal_scheme(graph)
        self.dag = graph.augmented_dag(cfg.latent_levels)
        self.ctx = context_for(self.dag)
        if self.ctx.d_pi < self.scheme.n_param:
            raise ValueError(
                f"dim(Pi) = {self.ctx.d_pi} is below the {self.scheme.n_param} sampled "
                "interactions; increase latent_levels"
            )
        self.prior = LambdaPrior(cfg.prior, self.scheme, self.table.N)
        self.alpha = cfg.prior.pseudo_prior_alpha
        self.counts = self.table.counts
        self.rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(cfg.chain_index,)))
        )
        self.xi: XiSelector | None = None
        self.max_zero_residual = 0.0

    def init_pp(self) -> ProbParams:
        return initial_probparams(self.counts, self.dag, self.alpha, self.rng, self.ctx)

    def base_meta(self) -> dict:
        return {
            "algorithm": self.cfg.algorithm,
            "iterations": self.cfg.iterations,
            "burn_in": self.cfg.burn_in,
            "seed": self.cfg.seed,
            "chain_index": self.cfg.chain_index,
            "latent_levels": self.cfg.latent_levels,
            "prior": self.cfg.prior.kind,
            "d_pi": self.ctx.d_pi,
            "n_free": self.scheme.n_free,
            "n_param": self.scheme.n_param,
            "d_xi": self.ctx.d_pi - self.scheme.n_param,
            "n_latents": len(self.dag.latents),
            "N": self.table.N,
        }

    def note_zero_residual(self, lam_full: np.ndarray):
        if len(self.scheme.zero_rows):
            r = float(np.max(np.abs(lam_full[self.scheme.zero_rows])))
            if r > self.max_zero_residual:
                self.max_zero_residual = r


class _Recorder:
    def __init__(self, rt: _Runtime):
        rows = rt.cfg.iterations - rt.cfg.burn_in
        self.burn_in = rt.cfg.burn_in
        self.lambdas = np.empty((rows, rt.scheme.n_free))
        self.accepted = np.empty(rows)
        self.log_posterior = np.empty(rows)
        self._i = 0

    def record(self, t: int, free: np.ndarray, accepted: float, logpost: float):
        if t < self.burn_in:
            return
        self.lambdas[self._i] = free
        self.accepted[self._i] = accepted
        self.log_posterior[self._i] = logpost
        self._i += 1

    def trace(self, rt: _Runtime, wall: float, **extra) -> Trace:
        assert self._i == self.lambdas.shape[0]
        meta = rt.base_meta()
        meta["max_zero_residual"] = rt.max_zero_residual
        meta.update(extra)
        labels = tuple(str(l) for l in rt.scheme.free_labels)
        return Trace(labels, self.lambdas, self.accepted, self.log_posterior, wall, meta)


@dataclass
class _PiState:
    pp: ProbParams
    p_aug: np.ndarray
    p: np.ndarray
    lam: object
    w: float  # prior density of the state expressed in Pi coordinates (log)
    ll_obs: float
    logpost: float


def _pi_state(rt: _Runtime, pp: ProbParams, p_aug=None, p=None) -> _PiState:
    if p_aug is None or p is None:
        p_aug, p = joint_from_params(pp, ctx=rt.ctx)
    lam = lambda_from_P(rt.scheme, p)
    rt.note_zero_residual(lam.full)
    ll = multinomial_loglik(rt.counts, p)
    if rt.prior.is_probability_flat:
        return _PiState(pp, p_aug, p, lam, 0.0, ll, ll)
    rep = jacobian_matrix(
        pp, rt.scheme, ctx=rt.ctx, xi=rt.xi, p_aug=p_aug, p=p, compute_condition=False
    )
    lp = rt.prior.logpdf(lam.param)
    return _PiState(pp, p_aug, p, lam, lp + rep.log_abs_det, ll, ll + lp)


def _choose_xi(rt: _Runtime, pp: ProbParams):
    """Fix the dimension-balancing coordinates for the whole chain.

    Under the flat probability prior the acceptance ratios never touch the
    Jacobian, the chain is valid on the probability space for any latent
    cardinality, and no selection (or rank requirement) applies.
    """
    if rt.prior.is_probability_flat:
        rt.xi = None
    else:
        rt.xi = select_xi(pp, rt.scheme, ctx=rt.ctx)


def _select_xi_from_pool(rt: _Runtime, pool, max_subsets: int = 10000, draws: int = 120):
    """Pick xi to maximise the estimated independence-sampler acceptance.

    Any fixed coordinate selection yields a correct chain, but the Jacobian's
    spread across the proposal pool (the gauge-volume variation) sets the
    acceptance rate; this evaluates candidate subsets on a pool subsample and
    keeps the best.  Candidate minors reuse one gradient computation per draw
    (the determinant with selector rows equals, up to sign, the minor that
    drops the xi columns).  Deterministic given the pool.
    """
    from .jacobian import delta_matrix  # local import to avoid a cycle at module load

    d_pi, n_param = rt.ctx.d_pi, rt.scheme.n_param
    d_xi = d_pi - n_param
    if d_xi == 0:
        rt.xi = XiSelector(())
        return
    sub = pool[:: max(1, len(pool) // draws)]
    grads, lps = [], []
    for pp_i, paug_i, p_i in sub:
        delta = delta_matrix(pp_i, ctx=rt.ctx, p_aug=paug_i)
        g = (rt.scheme.C @ ((rt.scheme.M @ delta) / (rt.scheme.M @ p_i)[:, None]))
        grads.append(g[rt.scheme.param_rows])
        lps.append(rt.prior.logpdf(lambda_from_P(rt.scheme, p_i).param))
    grads = np.stack(grads)
    lps = np.asarray(lps)

    from itertools import combinations
    from math import comb

    if comb(d_pi, d_xi) <= max_subsets:
        candidates = combinations(range(d_pi), d_xi)
    else:
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(0)))
        candidates = {
            tuple(sorted(gen.choice(d_pi, size=d_xi, replace=False).tolist()))
            for _ in range(max_subsets)
        }
        candidates.add(tuple(select_xi(sub[0][0], rt.scheme, ctx=rt.ctx).indices))
        candidates = sorted(candidates)

    everything = np.arange(d_pi)
    best = None
    for subset in candidates:
        keep = np.setdiff1d(everything, subset)
        sign, logdet = np.linalg.slogdet(grads[:, :, keep])
        if np.any(sign == 0.0) or np.any(logdet < -60.0):
            continue
        w = np.exp((lps + logdet) - (lps + logdet).max())
        ratio = np.minimum(1.0, w[None, :] / w[:, None])
        acc = float((w * ratio.mean(axis=1)).sum() / w.sum())
        if best is None or acc > best[0]:
            best = (acc, subset)
    if best is None:
        raise ValueError(
            "no dimension-balancing coordinate subset gives a regular Jacobian; "
            "the latent cardinality is too small for this graph - increase latent_levels"
        )
    rt.xi = XiSelector(best[1])
    return best[0]


def _gibbs_step(rt: _Runtime, pp: ProbParams, p_aug, p):
    """One sweep of the conjugate sampler; returns the new (pp, p_aug, p)."""
    if rt.ctx.n_lat > 1:
        nA = sample_latent_split(pp, rt.counts, rng=rt.rng, ctx=rt.ctx, p_aug=p_aug, p=p)
        counts = nA.counts
    else:
        counts = rt.counts
    pp = sample_conditional_dirichlet(counts, rt.dag, rt.alpha, rt.rng, rt.ctx)
    p_aug, p = joint_from_params(pp, ctx=rt.ctx)
    return pp, p_aug, p


def gibbs_run(cfg: ChainConfig, table, graph: BidirectedGraph) -> Trace:
    """Conjugate data-augmentation sampler on the probability tables.

    Targets the probability-space posterior under the Dirichlet
    pseudo-prior (``prior.pseudo_prior_alpha``); the interaction prior is
    deliberately not involved.  For homogeneous graphs there are no latents
    and every sweep is an exact conjugate draw.
    """
    rt = _Runtime(cfg, table, graph)
    rec = _Recorder(rt)
    pp = rt.init_pp()
    p_aug, p = joint_from_params(pp, ctx=rt.ctx)
    t0 = time.perf_counter()
    for t in range(cfg.iterations):
        pp, p_aug, p = _gibbs_step(rt, pp, p_aug, p)
        if t >= cfg.burn_in:
            lam = lambda_from_P(rt.scheme, p)
            rt.note_zero_residual(lam.full)
            lp = 0.0 if rt.prior.is_probability_flat else rt.prior.logpdf(lam.param)
            rec.record(t, lam.free, 1.0, multinomial_loglik(rt.counts, p) + lp)
    return rec.trace(rt, time.perf_counter() - t0, acceptance_rate=1.0)


def paa_run(cfg: ChainConfig, table, graph: BidirectedGraph) -> Trace:
    """Prior-adjustment algorithm: reordered Gibbs draws as independence proposals.

    Stage 1 runs the conjugate sampler for ``paa_stage1_iterations`` (default
    ``iterations + burn_in``), drops the first ``burn_in`` sweeps and
    reorders the rest (full-sample random permutation by default, ``thin:K``
    as the alternative).  Stage 2 consumes one reordered draw per iteration
    and accepts with the prior x pseudo-prior x Jacobian ratio; with a flat
    pseudo-prior (alpha = 1) the pseudo-prior ratio is identically one.
    """
    rt = _Runtime(cfg, table, graph)
    stage1 = cfg.paa_stage1_iterations or (cfg.iterations + cfg.burn_in)
    t0 = time.perf_counter()
    pool = []
    pp = rt.init_pp()
    p_aug, p = joint_from_params(pp, ctx=rt.ctx)
    for t in range(stage1):
        pp, p_aug, p = _gibbs_step(rt, pp, p_aug, p)
        if t >= cfg.burn_in:
            pool.append((pp, p_aug, p))
    mode, k = cfg.reorder_mode()
    if mode == "permute":
        order = rt.rng.permutation(len(pool))
    else:
        order = np.arange(k - 1, len(pool), k)
    pool = [pool[i] for i in order]
    if len(pool) < cfg.iterations:
        need = cfg.iterations * (k if mode == "thin" else 1) + cfg.burn_in
        raise StageExhaustedError(
            f"stage 1 provided {len(pool)} proposals but {cfg.iterations} are needed; "
            f"increase paa_stage1_iterations to at least {need}"
        )

    if rt.prior.is_probability_flat:
        est_acc = None
    else:
        est_acc = _select_xi_from_pool(rt, pool)
    flat_pseudo = rt.alpha == 1.0
    state = _pi_state(rt, *pool[0])
    rec = _Recorder(rt)
    rec.record(0, state.lam.free, 1.0, state.logpost)
    n_acc = 0
    for t in range(1, cfg.iterations):
        accepted = 0.0
        try:
            cand = _pi_state(rt, *pool[t])
        except (SingularJacobianError, NonpositiveProbabilityError):
            cand = None
        if cand is not None:
            log_a = cand.w - state.w
            if not flat_pseudo:
                log_a += pseudo_prior_logdensity(state.pp, rt.alpha)
                log_a -= pseudo_prior_logdensity(cand.pp, rt.alpha)
            if np.log(rt.rng.random()) < log_a:
                state, accepted = cand, 1.0
                n_acc += 1
        rec.record(t, state.lam.free, accepted, state.logpost)
    wall = time.perf_counter() - t0
    rate = n_acc / (cfg.iterations - 1)
    extra = {}
    if est_acc is not None:
        extra["xi_estimated_acceptance"] = round(est_acc, 4)
    return rec.trace(
        rt,
        wall,
        acceptance_rate=rate,
        stage1_iterations=stage1,
        reorder=cfg.paa_reorder,
        xi_indices=list(rt.xi.indices) if rt.xi else [],
        **extra,
    )


def pbis_run(cfg: ChainConfig, table, graph: BidirectedGraph) -> Trace:
    """Probability-based independence sampler with data augmentation.

    Each iteration splits the observed counts under the current tables,
    draws candidate tables from the conditional Dirichlet given that split,
    and accepts with the ratio of augmented likelihoods, interaction priors,
    proposal densities and Jacobians.  The augmented counts are part of the
    chain state and are retained on rejection.
    """
    rt = _Runtime(cfg, table, graph)
    t0 = time.perf_counter()
    pp = rt.init_pp()
    _choose_xi(rt, pp)
    state = _pi_state(rt, pp)
    nA = sample_latent_split(state.pp, rt.counts, rng=rt.rng, ctx=rt.ctx,
                             p_aug=state.p_aug, p=state.p)
    stats = counts_by_vertex(nA.counts.astype(float), rt.ctx)
    rec = _Recorder(rt)
    rec.record(0, state.lam.free, 1.0, state.logpost)
    n_acc = 0
    for t in range(1, cfg.iterations):
        cand_nA = sample_latent_split(state.pp, rt.counts, rng=rt.rng, ctx=rt.ctx,
                                      p_aug=state.p_aug, p=state.p)
        cand_stats = counts_by_vertex(cand_nA.counts.astype(float), rt.ctx)
        cand_pp = sample_conditional_dirichlet(cand_nA.counts, rt.dag, rt.alpha,
                                               rt.rng, rt.ctx)
        accepted = 0.0
        try:
            cand = _pi_state(rt, cand_pp)
            log_a = (
                multinomial_loglik(nA.counts, cand.p_aug)
                - multinomial_loglik(cand_nA.counts, state.p_aug)
                + (cand.w - state.w)
                + conditional_dirichlet_logpdf(state.pp, stats, rt.alpha, rt.ctx)
                - conditional_dirichlet_logpdf(cand_pp, cand_stats, rt.alpha, rt.ctx)
            )
        except (SingularJacobianError, NonpositiveProbabilityError):
            log_a = -np.inf
        if np.log(rt.rng.random()) < log_a:
            state, nA, stats, accepted = cand, cand_nA, cand_stats, 1.0
            n_acc += 1
        rec.record(t, state.lam.free, accepted, state.logpost)
    wall = time.perf_counter() - t0
    rate = n_acc / (cfg.iterations - 1)
    return rec.trace(
        rt, wall, acceptance_rate=rate,
        xi_indices=list(rt.xi.indices) if rt.xi else [],
    )


def _parse_scales(cfg: ChainConfig, n_blocks: int) -> np.ndarray:
    scales = np.atleast_1d(np.asarray(cfg.rw_scales, dtype=float))
    if scales.size == 1:
        return np.full(n_blocks, float(scales[0]))
    if scales.size != n_blocks:
        raise ValueError(f"rw_scales must be scalar or length {n_blocks}, got {scales.size}")
    return scales.astype(float).copy()


def _adapt(scales: np.ndarray, b: int, t: int, acc_prob: float):
    if scales[b] <= 0:
        return
    gain = (t + 1.0) ** -0.6
    scales[b] = float(np.clip(scales[b] * np.exp(gain * (acc_prob - RW_TARGET_RATE)), 1e-6, 50.0))


def rw_lambda_run(cfg: ChainConfig, table, graph: BidirectedGraph) -> Trace:
    """Blockwise Gaussian random walk directly on the free interactions.

    One block per marginal; every proposal is mapped to a probability vector
    by the Newton inversion, and a non-convergent inversion counts as a move
    out of support (rejected, tallied in the metadata).  Scales adapt towards
    a 35% acceptance rate during burn-in and are frozen afterwards.
    """
    if cfg.prior.kind == "probability_flat":
        raise ValueError("probability_flat prior is not defined for rw_lambda")
    rt = _Runtime(cfg, table, graph)
    blocks = rt.scheme.param_blocks()
    scales = _parse_scales(cfg, len(blocks))
    t0 = time.perf_counter()
    pp = rt.init_pp()
    _, p = joint_from_params(pp, ctx=rt.ctx)
    lam = lambda_from_P(rt.scheme, p)
    x, P = lam.param.copy(), p
    ll = multinomial_loglik(rt.counts, P)
    lp = rt.prior.logpdf(x)
    rec = _Recorder(rt)
    failures = 0
    acc_sum = 0.0
    for t in range(cfg.iterations):
        hits = 0
        for b, idx in enumerate(blocks):
            prop = x.copy()
            prop[idx] += scales[b] * rt.rng.standard_normal(idx.size)
            acc_prob = 0.0
            try:
                P_new = invert_lambda(rt.scheme, prop, x0=P)
                ll_new = multinomial_loglik(rt.counts, P_new)
                lp_new = rt.prior.logpdf(prop)
                acc_prob = float(min(1.0, np.exp(min(0.0, ll_new + lp_new - ll - lp))))
                if rt.rng.random() < acc_prob:
                    x, P, ll, lp = prop, P_new, ll_new, lp_new
                    hits += 1
            except (NonConvergenceError, NonpositiveProbabilityError):
                failures += 1
            if t < cfg.burn_in:
                _adapt(scales, b, t, acc_prob)
        frac = hits / len(blocks)
        if t >= cfg.burn_in:
            acc_sum += frac
            rec.record(t, lambda_from_P(rt.scheme, P).free, frac, ll + lp)
    wall = time.perf_counter() - t0
    return rec.trace(
        rt, wall,
        acceptance_rate=acc_sum / (cfg.iterations - cfg.burn_in),
        invert_failures=failures,
        final_scales=[round(float(s), 6) for s in scales],
    )


def _logit_rows(t: np.ndarray) -> np.ndarray:
    return np.log(t[:, :-1]) - np.log(t[:, -1:])


def _rows_from_logits(phi: np.ndarray) -> np.ndarray:
    z = np.concatenate([phi, np.zeros((phi.shape[0], 1))], axis=1)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def rw_pi_run(cfg: ChainConfig, table, graph: BidirectedGraph) -> Trace:
    """Gaussian random walk on the multinomial logits of the probability tables.

    One block per vertex of the augmented DAG.  The target density in logit
    space is the observed-table likelihood times the interaction prior
    carried to probability coordinates (Jacobian included) times the
    logit-map volume term; scales adapt to 35% during burn-in.
    """
    rt = _Runtime(cfg, table, graph)
    n_blocks = len(rt.ctx.names)
    scales = _parse_scales(cfg, n_blocks)
    t0 = time.perf_counter()
    pp = rt.init_pp()
    _choose_xi(rt, pp)

    def logit_volume(pp_):
        return float(sum(np.log(t).sum() for t in pp_.tables))

    state = _pi_state(rt, pp)
    vol = logit_volume(pp)
    dens = state.ll_obs + state.w + vol
    phis = [(_logit_rows(t)) for t in pp.tables]
    rec = _Recorder(rt)
    acc_sum = 0.0
    for t in range(cfg.iterations):
        hits = 0
        for b in range(n_blocks):
            prop_phi = phis[b] + scales[b] * rt.rng.standard_normal(phis[b].shape)
            tables = list(state.pp.tables)
            tables[b] = _rows_from_logits(prop_phi)
            cand_pp = ProbParams(rt.dag, tuple(tables))
            acc_prob = 0.0
            try:
                cand = _pi_state(rt, cand_pp)
                cand_vol = logit_volume(cand_pp)
                cand_dens = cand.ll_obs + cand.w + cand_vol
                acc_prob = float(min(1.0, np.exp(min(0.0, cand_dens - dens))))
                if rt.rng.random() < acc_prob:
                    state, dens, phis[b] = cand, cand_dens, prop_phi
                    hits += 1
            except (SingularJacobianError, NonpositiveProbabilityError):
                pass
            if t < cfg.burn_in:
                _adapt(scales, b, t, acc_prob)
        frac = hits / n_blocks
        if t >= cfg.burn_in:
            acc_sum += frac
            rec.record(t, state.lam.free, frac, state.logpost)
    wall = time.perf_counter() - t0
    return rec.trace(
        rt, wall,
        acceptance_rate=acc_sum / (cfg.iterations - cfg.burn_in),
        final_scales=[round(float(s), 6) for s in scales],
        xi_indices=list(rt.xi.indices) if rt.xi else [],
    )


_RUNNERS = {
    "gibbs": gibbs_run,
    "pbis": pbis_run,
    "paa": paa_run,
    "rw_lambda": rw_lambda_run,
    "rw_pi": rw_pi_run,
}


def run_chain(cfg: ChainConfig, table, graph: BidirectedGraph) -> Trace:
    return _RUNNERS[cfg.algorithm](cfg, table, graph)


def run_chains(cfg: ChainConfig, table, graph: BidirectedGraph, chains: int = 1,
               threads: int = 1) -> list:
    """Run ``chains`` independent chains, stream-split from the same seed."""
    cfgs = [replace(cfg, chain_index=i) for i in range(chains)]
    if threads > 1 and chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda c: run_chain(c, table, graph), cfgs))
    return [run_chain(c, table, graph) for c in cfgs]


def merge_traces(traces) -> Trace:
    """Concatenate post burn-in draws of several chains of one run.

    Wall time is summed (total compute), so ESS per second derived from the
    merged trace reflects the whole run.
    """
    traces = list(traces)
    if len(traces) == 1:
        return traces[0]
    base = traces[0]
    if any(t.labels != base.labels for t in traces):
        raise ValueError("traces to merge have mismatched labels")
    meta = dict(base.meta)
    meta["chains"] = len(traces)
    meta["iterations"] = sum(t.meta.get("iterations", t.n_draws) for t in traces)
    meta["acceptance_rate"] = float(np.mean([t.meta.get("acceptance_rate", np.nan) for t in traces]))
    meta["max_zero_residual"] = max(t.meta.get("max_zero_residual", 0.0) for t in traces)
    return Trace(
        base.labels,
        np.vstack([t.lambdas for t in traces]),
        np.concatenate([t.accepted for t in traces]),
        np.concatenate([t.log_posterior for t in traces]),
        sum(t.wall_seconds for t in traces),
        meta,
    )
