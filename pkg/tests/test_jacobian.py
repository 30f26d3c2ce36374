"""Analytic derivatives against finite differences and hand oracles."""

import numpy as np
import pytest

from bimarg.graphs import from_edge_list
from bimarg.jacobian import (
    XiSelector,
    delta_matrix,
    jacobian_matrix,
    log_abs_det_jacobian,
    minor_route_log_abs_det,
    select_xi,
)
from bimarg.model import ProbParams, context_for, joint_from_params
from bimarg.parameterization import build_marginal_scheme, lambda_from_P

FD_H = 1e-6


def chain_graph():
    return from_edge_list(
        [("A", 2), ("B", 2), ("C", 2), ("D", 2)],
        [("A", "B"), ("B", "C"), ("C", "D")],
    )


def random_pp(dag, rng, conc=2.0):
    ctx = context_for(dag)
    return ProbParams(
        dag,
        tuple(rng.dirichlet(np.full(lv, conc), size=ctx.n_cfg[k])
              for k, lv in enumerate(ctx.levels)),
    )


def fd_delta(pp, dag):
    ctx = context_for(dag)
    vec = pp.vector
    out = np.zeros((ctx.n_obs, ctx.d_pi))
    for j in range(ctx.d_pi):
        vp, vm = vec.copy(), vec.copy()
        vp[j] += FD_H
        vm[j] -= FD_H
        _, pl = joint_from_params(ProbParams.from_vector(dag, vp))
        _, pm = joint_from_params(ProbParams.from_vector(dag, vm))
        out[:, j] = (pl - pm) / (2 * FD_H)
    return out


def fd_lambda_grad(pp, dag, scheme):
    ctx = context_for(dag)
    vec = pp.vector
    out = np.zeros((scheme.n_free, ctx.d_pi))
    for j in range(ctx.d_pi):
        vp, vm = vec.copy(), vec.copy()
        vp[j] += FD_H
        vm[j] -= FD_H
        _, pl = joint_from_params(ProbParams.from_vector(dag, vp))
        _, pm = joint_from_params(ProbParams.from_vector(dag, vm))
        out[:, j] = (lambda_from_P(scheme, pl).free - lambda_from_P(scheme, pm).free) / (2 * FD_H)
    return out


class TestDelta:
    def test_saturated_single_vertex(self):
        """Pi = first cells of P: identity block over free cells, -1 last row."""
        g = from_edge_list([("A", 4)], [])
        dag = g.augmented_dag(2)
        pp = ProbParams(dag, (np.array([[0.1, 0.2, 0.3, 0.4]]),))
        delta = delta_matrix(pp, dag)
        np.testing.assert_allclose(delta[:3], np.eye(3), atol=1e-14)
        np.testing.assert_allclose(delta[3], [-1, -1, -1], atol=1e-14)

    @pytest.mark.parametrize("latent_levels", [2, 3])
    def test_matches_finite_differences(self, latent_levels):
        g = chain_graph()
        dag = g.augmented_dag(latent_levels)
        rng = np.random.default_rng(0)
        for _ in range(5):
            pp = random_pp(dag, rng)
            np.testing.assert_allclose(
                delta_matrix(pp, dag), fd_delta(pp, dag), atol=1e-7
            )

    def test_zero_for_mismatched_parent_config(self):
        """Columns touch only cells whose observed-parent levels match."""
        g = chain_graph()
        dag = g.augmented_dag(2)
        ctx = context_for(dag)
        pp = random_pp(dag, np.random.default_rng(1))
        delta = delta_matrix(pp, dag)
        # B's first conditional row is (A=1, L=1); cells with A=2 see zero
        col = ctx.pi_slices[1].start  # B, cfg 0, level 1
        cells_a2 = np.flatnonzero(ctx.obs_grid[:, 0] == 1)
        np.testing.assert_array_equal(delta[cells_a2, col], 0.0)

    def test_columns_sum_to_zero(self):
        """Total probability is constant in Pi, so every column sums to 0."""
        g = chain_graph()
        dag = g.augmented_dag(3)
        pp = random_pp(dag, np.random.default_rng(2))
        np.testing.assert_allclose(delta_matrix(pp, dag).sum(axis=0), 0.0, atol=1e-12)


class TestJacobianMatrix:
    def test_saturated_formula(self):
        """Saturated case: d(lambda)/dP via the M-column difference formula."""
        g = from_edge_list([("A", 4)], [])
        dag = g.augmented_dag(2)
        scheme = build_marginal_scheme(g)
        pp = ProbParams(dag, (np.array([[0.1, 0.2, 0.3, 0.4]]),))
        _, p = joint_from_params(pp)
        rep = jacobian_matrix(pp, scheme, dag)
        mp = scheme.M @ p
        expected = np.zeros((scheme.n_param, 3))
        for r, k in enumerate(scheme.param_rows):
            for j in range(3):
                expected[r, j] = np.sum(
                    scheme.C[k] * (scheme.M[:, j] - scheme.M[:, 3]) / mp
                )
        np.testing.assert_allclose(rep.jac, expected, atol=1e-10)
        np.testing.assert_allclose(rep.jac, fd_lambda_grad(pp, dag, scheme)[1:], atol=1e-6)

    def test_free_gradients_match_fd(self):
        g = chain_graph()
        dag = g.augmented_dag(3)
        ctx = context_for(dag)
        scheme = build_marginal_scheme(g)
        rng = np.random.default_rng(3)
        pp = random_pp(dag, rng)
        p_aug, p = joint_from_params(pp)
        delta = delta_matrix(pp, dag)
        grad = (scheme.C @ ((scheme.M @ delta) / (scheme.M @ p)[:, None]))
        np.testing.assert_allclose(
            grad[scheme.free_rows], fd_lambda_grad(pp, dag, scheme),
            rtol=1e-5, atol=1e-8,
        )

    def test_two_route_determinant(self):
        g = chain_graph()
        dag = g.augmented_dag(3)
        scheme = build_marginal_scheme(g)
        rng = np.random.default_rng(4)
        pp = random_pp(dag, rng)
        xi = select_xi(pp, scheme)
        for _ in range(5):
            q = random_pp(dag, rng)
            a = jacobian_matrix(q, scheme, xi=xi).log_abs_det
            b = minor_route_log_abs_det(q, scheme, xi=xi)
            assert abs(a - b) < 1e-10

    def test_d_xi_zero_for_homogeneous(self):
        g = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        dag = g.augmented_dag(2)
        scheme = build_marginal_scheme(g)
        pp = random_pp(dag, np.random.default_rng(5))
        xi = select_xi(pp, scheme)
        assert xi.d_xi == 0
        rep = jacobian_matrix(pp, scheme)
        assert rep.jac.shape == (3, 3)

    def test_one_dimensional_hand_oracle(self):
        """Binary saturated vertex: dlambda_free/dp1 = -1/(2 p1) - 1/(2 p2)."""
        g = from_edge_list([("A", 2)], [])
        dag = g.augmented_dag(2)
        scheme = build_marginal_scheme(g)
        p1 = 0.3
        pp = ProbParams(dag, (np.array([[p1, 1 - p1]]),))
        fwd = jacobian_matrix(pp, scheme).log_abs_det
        hand = abs(-0.5 / p1 - 0.5 / (1 - p1))
        assert abs(fwd - np.log(hand)) < 1e-12
        assert abs(log_abs_det_jacobian(pp, scheme) + fwd) < 1e-15

    def test_dimension_imbalance_rejected(self):
        g = chain_graph()
        dag = g.augmented_dag(3)
        scheme = build_marginal_scheme(g)
        pp = random_pp(dag, np.random.default_rng(6))
        with pytest.raises(ValueError, match="imbalance"):
            jacobian_matrix(pp, scheme, xi=XiSelector((0, 1)))

    def test_binary_latent_rank_failure(self):
        g = chain_graph()
        dag = g.augmented_dag(2)
        scheme = build_marginal_scheme(g)
        pp = random_pp(dag, np.random.default_rng(7))
        with pytest.raises(ValueError, match="latent"):
            select_xi(pp, scheme)

    def test_condition_estimate_reasonable(self):
        g = chain_graph()
        dag = g.augmented_dag(3)
        scheme = build_marginal_scheme(g)
        pp = random_pp(dag, np.random.default_rng(8), conc=5.0)
        xi = select_xi(pp, scheme)
        rep = jacobian_matrix(pp, scheme, xi=xi)
        assert rep.condition_estimate < 1e8


class TestXiSelector:
    def test_tail(self):
        assert XiSelector.tail(5, 2).indices == (3, 4)
        assert XiSelector.tail(5, 0).indices == ()

    def test_validation(self):
        with pytest.raises(ValueError):
            XiSelector((2, 1))
        with pytest.raises(ValueError):
            XiSelector.tail(3, 4)

    def test_selected_indices_avoid_identified_coordinates(self):
        """A source vertex's own probability carries no gauge freedom."""
        g = chain_graph()
        dag = g.augmented_dag(3)
        ctx = context_for(dag)
        scheme = build_marginal_scheme(g)
        pp = random_pp(dag, np.random.default_rng(9))
        xi = select_xi(pp, scheme)
        assert xi.d_xi == ctx.d_pi - scheme.n_param == 6
        identified = {ctx.pi_slices[0].start, ctx.pi_slices[3].start}  # A and D
        assert not (set(xi.indices) & identified)
