"""Probability model: joints, likelihoods, priors, conjugate draws."""

import numpy as np
import pytest
from scipy.special import gammaln
from scipy.stats import multivariate_normal

from bimarg.datasets import four_chain_truth, load_four_chain
from bimarg.exceptions import NonpositiveProbabilityError
from bimarg.graphs import from_edge_list
from bimarg.model import (
    ContingencyTable,
    LambdaPrior,
    PriorSpec,
    ProbParams,
    conditional_dirichlet_logpdf,
    context_for,
    counts_by_vertex,
    initial_probparams,
    joint_from_params,
    log_prior_lambda,
    multinomial_loglik,
    pseudo_prior_logdensity,
    sample_conditional_dirichlet,
    sample_latent_split,
    simulate_table,
)
from bimarg.parameterization import build_marginal_scheme


@pytest.fixture(scope="module")
def chain():
    g, table = load_four_chain()
    dag = g.augmented_dag(2)
    return g, table, dag, context_for(dag)


def random_pp(dag, rng, conc=2.0):
    ctx = context_for(dag)
    tabs = tuple(
        rng.dirichlet(np.full(lv, conc), size=ctx.n_cfg[k])
        for k, lv in enumerate(ctx.levels)
    )
    return ProbParams(dag, tabs)


class TestJointFromParams:
    def test_uniform_conditionals_give_uniform_joint(self, chain):
        _, _, dag, ctx = chain
        tabs = tuple(np.full((ctx.n_cfg[k], lv), 1.0 / lv) for k, lv in enumerate(ctx.levels))
        _, p = joint_from_params(ProbParams(dag, tabs))
        np.testing.assert_allclose(p, 1.0 / 16, atol=1e-14)

    def test_degenerate_latent_fixes_level(self, chain):
        _, _, dag, ctx = chain
        rng = np.random.default_rng(0)
        pp = random_pp(dag, rng)
        tabs = list(pp.tables)
        tabs[-1] = np.array([[1.0 - 1e-13, 1e-13]])  # latent pinned at level 1
        _, p = joint_from_params(ProbParams(dag, tuple(tabs)))
        # against the direct product with L fixed at level 1
        names = ctx.names
        direct = np.zeros(16)
        grid = ctx.obs_grid
        a, b, c, d = (pp.tables[i] for i in range(4))
        for i in range(16):
            ia, ib, ic, id_ = grid[i]
            direct[i] = (
                a[0, ia] * d[0, id_] * b[2 * 0 + ia, ib] * c[2 * 0 + id_, ic]
            )
        np.testing.assert_allclose(p, direct, atol=1e-10)

    def test_sums_to_one_many_draws(self, chain):
        _, _, dag, _ = chain
        rng = np.random.default_rng(42)
        for _ in range(1000):
            _, p = joint_from_params(random_pp(dag, rng, conc=0.8))
            assert abs(p.sum() - 1.0) < 1e-12

    def test_vector_round_trip(self, chain):
        _, _, dag, _ = chain
        pp = random_pp(dag, np.random.default_rng(3))
        back = ProbParams.from_vector(dag, pp.vector)
        for t1, t2 in zip(pp.tables, back.tables):
            np.testing.assert_allclose(t1, t2, atol=1e-15)


class TestMultinomialLoglik:
    def test_single_trial(self):
        assert abs(multinomial_loglik([1, 0], [0.5, 0.5]) - np.log(0.5)) < 1e-14

    def test_two_same_cell(self):
        assert abs(multinomial_loglik([2, 0], [0.5, 0.5]) - 2 * np.log(0.5)) < 1e-14

    def test_log_factorial_oracle(self, chain):
        _, table, _, _ = chain
        n = table.counts
        p = n / n.sum()
        expected = (
            gammaln(n.sum() + 1) - sum(gammaln(v + 1) for v in n)
            + sum(v * np.log(q) for v, q in zip(n, p) if v)
        )
        assert abs(multinomial_loglik(table, p) - expected) < 1e-9

    def test_rejects_nonpositive(self):
        with pytest.raises(NonpositiveProbabilityError):
            multinomial_loglik([1, 1], [1.0, 0.0])


class TestLambdaPrior:
    def test_iid_normal_at_zero(self, chain):
        g, table, _, _ = chain
        scheme = build_marginal_scheme(g)
        spec = PriorSpec(kind="iid_normal", sigma2=10.0)
        d = scheme.n_param
        got = log_prior_lambda(np.zeros(d), spec, scheme, table.N)
        assert abs(got - (-(d / 2) * np.log(2 * np.pi * 10.0))) < 1e-12

    def test_df_binary_reduces_to_n02(self, chain):
        """All-binary: non-intercept blocks must be exactly N(0,2) iid."""
        g, table, _, _ = chain
        scheme = build_marginal_scheme(g)
        ev = LambdaPrior(PriorSpec(kind="dellaportas_forster"), scheme, table.N)
        rng = np.random.default_rng(0)
        x = rng.normal(size=scheme.n_param)
        direct = -0.5 * x @ x / 2.0 - 0.5 * scheme.n_param * np.log(2 * np.pi * 2.0)
        assert abs(ev.logpdf(x) - direct) < 1e-10

    def test_df_matches_mvn_oracle(self, chain):
        """Sum of per-marginal normal log densities, via scipy as the oracle."""
        g, table, _, _ = chain
        scheme = build_marginal_scheme(g)
        ev = LambdaPrior(PriorSpec(kind="dellaportas_forster"), scheme, table.N)
        truth = four_chain_truth()
        x = np.array([truth[str(l)] for l in scheme.param_labels])
        total = 0.0
        for positions, chol, _, means in ev._blocks:
            cov = chol @ chol.T
            total += multivariate_normal.logpdf(x[positions], mean=means, cov=cov)
        assert np.isfinite(total)
        assert abs(ev.logpdf(x) - total) < 1e-9

    def test_intercept_mean(self, chain):
        g, table, _, _ = chain
        scheme = build_marginal_scheme(g)
        ev = LambdaPrior(PriorSpec(kind="dellaportas_forster"), scheme, table.N)
        assert abs(ev.intercept_mean - (np.log(table.N / 16) - np.log(table.N))) < 1e-12
        assert abs(ev.intercept_var - 2.0) < 1e-12

    def test_probability_flat_is_zero(self, chain):
        g, table, _, _ = chain
        scheme = build_marginal_scheme(g)
        spec = PriorSpec(kind="probability_flat")
        assert log_prior_lambda(np.ones(scheme.n_param), spec, scheme, table.N) == 0.0


class TestPseudoPrior:
    def test_flat_alpha_is_constant(self, chain):
        _, _, dag, _ = chain
        rng = np.random.default_rng(1)
        a = pseudo_prior_logdensity(random_pp(dag, rng), 1.0)
        b = pseudo_prior_logdensity(random_pp(dag, rng), 1.0)
        assert abs(a - b) < 1e-12

    def test_closed_form_binary(self):
        dag = from_edge_list([("A", 2)], []).augmented_dag(2)
        pp = ProbParams(dag, (np.array([[0.3, 0.7]]),))
        expected = gammaln(4) - 2 * gammaln(2) + np.log(0.3 * 0.7)
        assert abs(pseudo_prior_logdensity(pp, 2.0) - expected) < 1e-12

    def test_degenerate_errors(self):
        dag = from_edge_list([("A", 2)], []).augmented_dag(2)
        pp = ProbParams(dag, (np.array([[1.0, 0.0]]),))
        with pytest.raises(NonpositiveProbabilityError):
            pseudo_prior_logdensity(pp, 1.0)


class TestLatentSplit:
    def test_no_latents_identity(self):
        g = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        dag = g.augmented_dag(2)
        rng = np.random.default_rng(0)
        pp = random_pp(dag, rng)
        counts = np.array([3, 1, 2, 4])
        nA = sample_latent_split(pp, counts, rng=rng)
        np.testing.assert_array_equal(nA.counts, counts)

    def test_degenerate_latent_assigns_level_one(self, chain):
        _, table, dag, ctx = chain
        rng = np.random.default_rng(0)
        pp = random_pp(dag, rng)
        tabs = list(pp.tables)
        tabs[-1] = np.array([[1.0 - 1e-12, 1e-12]])
        pp = ProbParams(dag, tuple(tabs))
        nA = sample_latent_split(pp, table, rng=rng)
        assert nA.counts[16:].sum() == 0

    def test_margins_preserved_exactly(self, chain):
        _, table, dag, ctx = chain
        rng = np.random.default_rng(5)
        for _ in range(100):
            pp = random_pp(dag, rng)
            nA = sample_latent_split(pp, table, rng=rng)
            np.testing.assert_array_equal(nA.observed_margin(), table.counts)

    def test_split_fractions_match_conditional(self, chain):
        """Large counts: split fractions within 3 binomial SEs of p_aug/p."""
        _, _, dag, ctx = chain
        rng = np.random.default_rng(7)
        pp = random_pp(dag, rng)
        p_aug, p = joint_from_params(pp)
        big = np.full(16, 100_000)
        nA = sample_latent_split(pp, big, rng=rng)
        cond = (p_aug.reshape(ctx.n_lat, ctx.n_obs) / p[None, :])
        frac = nA.counts.reshape(ctx.n_lat, ctx.n_obs) / 100_000
        se = np.sqrt(cond * (1 - cond) / 100_000)
        assert np.all(np.abs(frac - cond) < 3.5 * se + 1e-12)


class TestConditionalDirichlet:
    def test_posterior_moments(self):
        dag = from_edge_list([("A", 2)], []).augmented_dag(2)
        rng = np.random.default_rng(0)
        draws = np.array([
            sample_conditional_dirichlet(np.array([3.0, 1.0]), dag, 1.0, rng).tables[0][0, 0]
            for _ in range(20000)
        ])
        # Dirichlet(4, 2) moment oracle
        se = np.sqrt(draws.var() / draws.size)
        assert abs(draws.mean() - 4 / 6) < 4 * se

    def test_zero_counts_uniform(self):
        dag = from_edge_list([("A", 2)], []).augmented_dag(2)
        rng = np.random.default_rng(0)
        draws = np.array([
            sample_conditional_dirichlet(np.zeros(2), dag, 1.0, rng).tables[0][0, 0]
            for _ in range(20000)
        ])
        assert abs(draws.mean() - 0.5) < 0.01

    def test_rows_independent_across_configs(self):
        g = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        dag = g.augmented_dag(2)
        rng = np.random.default_rng(0)
        draws = np.array([
            sample_conditional_dirichlet(np.array([5.0, 3.0, 2.0, 6.0]), dag, 1.0, rng)
            .tables[1][:, 0]
            for _ in range(20000)
        ])
        corr = np.corrcoef(draws.T)[0, 1]
        assert abs(corr) < 0.03

    def test_mean_formula(self, chain):
        _, table, dag, ctx = chain
        rng = np.random.default_rng(11)
        nA = np.tile(table.counts / 2, 2).astype(float)
        stats = counts_by_vertex(nA, ctx)
        sums = [
            np.zeros_like(t) for t in sample_conditional_dirichlet(nA, dag, 1.0, rng).tables
        ]
        reps = 4000
        for _ in range(reps):
            pp = sample_conditional_dirichlet(nA, dag, 1.0, rng)
            for s, t in zip(sums, pp.tables):
                s += t
        for s, c in zip(sums, stats):
            expected = (1.0 + c) / (c.shape[1] + c.sum(axis=1, keepdims=True))
            np.testing.assert_allclose(s / reps, expected, atol=0.02)

    def test_logpdf_matches_scipy(self, chain):
        from scipy.stats import dirichlet as sp_dirichlet

        _, table, dag, ctx = chain
        rng = np.random.default_rng(2)
        nA = np.tile(table.counts / 2, 2).astype(float)
        pp = sample_conditional_dirichlet(nA, dag, 1.5, rng)
        stats = counts_by_vertex(nA, ctx)
        expected = 0.0
        for t, c in zip(pp.tables, stats):
            for row in range(t.shape[0]):
                expected += sp_dirichlet.logpdf(
                    t[row] / t[row].sum(), 1.5 + c[row]
                )
        got = conditional_dirichlet_logpdf(pp, stats, 1.5, ctx)
        assert abs(got - expected) < 1e-8


class TestSimulateTable:
    def test_point_mass(self):
        rng = np.random.default_rng(0)
        p = np.zeros(8)
        p[0] = 1.0
        counts = simulate_table(p, 100, rng)
        assert counts[0] == 100 and counts.sum() == 100

    def test_law_of_large_numbers(self):
        rng = np.random.default_rng(0)
        p = np.array([0.5, 0.2, 0.2, 0.1])
        total = np.zeros(4)
        reps = 10000
        for _ in range(reps):
            total += simulate_table(p, 50, rng)
        freq = total / (50 * reps)
        se = np.sqrt(p * (1 - p) / (50 * reps))
        assert np.all(np.abs(freq - p) < 4 * se)


class TestContingencyTable:
    def test_from_observations(self):
        g = from_edge_list([("A", 2), ("B", 3)], [])
        X = np.array([[1, 1], [2, 3], [1, 1], [2, 2]])
        t = ContingencyTable.from_observations(X, g.vertices)
        assert t.counts.tolist() == [2, 0, 0, 1, 0, 1]

    def test_rejects_out_of_range(self):
        g = from_edge_list([("A", 2)], [])
        with pytest.raises(ValueError):
            ContingencyTable.from_observations(np.array([[3]]), g.vertices)

    def test_initial_probparams_interior(self, chain):
        _, table, dag, _ = chain
        rng = np.random.default_rng(0)
        pp = initial_probparams(table.counts, dag, 1.0, rng)
        for t in pp.tables:
            assert t.min() > 0 and np.allclose(t.sum(axis=1), 1.0)
