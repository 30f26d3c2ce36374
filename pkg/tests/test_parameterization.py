"""Marginal scheme construction and the lambda <-> P maps."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bimarg.datasets import four_chain_truth
from bimarg.exceptions import NonConvergenceError, OrderDecomposabilityError
from bimarg.graphs import from_edge_list
from bimarg.parameterization import (
    build_C,
    build_M,
    build_marginal_scheme,
    invert_lambda,
    lambda_from_P,
)


_SCHEME_CACHE = {}


def _chain_scheme():
    if "chain" not in _SCHEME_CACHE:
        g = from_edge_list(
            [("A", 2), ("B", 2), ("C", 2), ("D", 2)],
            [("A", "B"), ("B", "C"), ("C", "D")],
        )
        _SCHEME_CACHE["chain"] = (g, build_marginal_scheme(g))
    return _SCHEME_CACHE["chain"][1]


@pytest.fixture(scope="module")
def chain():
    _chain_scheme()
    return _SCHEME_CACHE["chain"]


@pytest.fixture(scope="module")
def torus_scheme():
    g = from_edge_list(
        [("A", 2), ("I", 2), ("P", 2), ("S", 2)],
        [("A", "I"), ("I", "P"), ("P", "S")],
    )
    return build_marginal_scheme(g)


def truth_param(scheme):
    truth = four_chain_truth()
    return np.array([truth[str(l)] for l in scheme.param_labels])


class TestScheme:
    def test_four_chain_layout(self, chain):
        _, scheme = chain
        assert scheme.marginals == (
            ("A", "C"), ("A", "D"), ("B", "D"),
            ("A", "B", "D"), ("A", "C", "D"), ("A", "B", "C", "D"),
        )
        assert [str(l) for l in scheme.free_labels] == [
            "lambda[AC].intercept", "lambda[AC].A(2)", "lambda[AC].C(2)",
            "lambda[AD].D(2)", "lambda[BD].B(2)", "lambda[ABD].AB(2,2)",
            "lambda[ACD].CD(2,2)", "lambda[ABCD].BC(2,2)",
            "lambda[ABCD].ABC(2,2,2)", "lambda[ABCD].BCD(2,2,2)",
            "lambda[ABCD].ABCD(2,2,2,2)",
        ]
        assert scheme.zero_set == (
            (("A", "C"), ("A", "C")),
            (("A", "D"), ("A", "D")),
            (("B", "D"), ("B", "D")),
            (("A", "B", "D"), ("A", "B", "D")),
            (("A", "C", "D"), ("A", "C", "D")),
        )
        assert scheme.n_free == 11 and scheme.n_param == 10

    def test_torus_marginals(self, torus_scheme):
        assert torus_scheme.marginals == (
            ("A", "P"), ("A", "S"), ("I", "S"),
            ("A", "I", "S"), ("A", "P", "S"), ("A", "I", "P", "S"),
        )
        assert len(torus_scheme.zero_rows) == 5

    def test_complete_pair_is_saturated(self):
        g = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        scheme = build_marginal_scheme(g)
        assert scheme.marginals == (("A", "B"),)
        assert len(scheme.zero_rows) == 0
        assert scheme.n_free == 4 and scheme.n_param == 3

    def test_isolated_triple_not_order_decomposable(self):
        g = from_edge_list([("A", 2), ("B", 2), ("C", 2)], [])
        with pytest.raises(OrderDecomposabilityError):
            build_marginal_scheme(g)


class TestMMatrix:
    def test_single_variable_marginal_rows(self):
        g = from_edge_list([("A", 2), ("B", 2)], [])
        # marginals for the empty pair: (AB) only; build rows for {A} by hand
        scheme = build_marginal_scheme(from_edge_list([("A", 2), ("B", 2)], [("A", "B")]))
        # enumerate-and-sum oracle over the four cells for the A margin
        import bimarg.parameterization as par

        m = par._kron_chain([np.eye(2), np.ones((1, 2))])
        np.testing.assert_array_equal(m, [[1, 0, 1, 0], [0, 1, 0, 1]])

    def test_full_marginal_is_identity(self, chain):
        _, scheme = chain
        block = scheme.M[-scheme.n_cells :, :]
        np.testing.assert_array_equal(block, np.eye(16))

    def test_torus_row_count(self, torus_scheme):
        assert torus_scheme.M.shape == (4 + 4 + 4 + 8 + 8 + 16, 16)

    def test_marginal_blocks_sum_to_one(self, chain):
        _, scheme = chain
        rng = np.random.default_rng(0)
        p = rng.dirichlet(np.ones(16))
        mp = scheme.M @ p
        start = 0
        for marg in scheme.marginals:
            size = 2 ** len(marg)
            assert abs(mp[start : start + size].sum() - 1.0) < 1e-12
            start += size


class TestCMatrix:
    def test_one_binary_variable(self):
        g = from_edge_list([("A", 2)], [])
        scheme = build_marginal_scheme(g)
        np.testing.assert_allclose(scheme.C, [[0.5, 0.5], [-0.5, 0.5]])

    def test_saturated_intercept_row(self):
        g = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        scheme = build_marginal_scheme(g)
        np.testing.assert_allclose(scheme.C[scheme.intercept_row], [0.25] * 4)

    def test_linear_solve_oracle(self, chain):
        """C blocks equal rows of the design inverse from an independent solve."""
        g, scheme = chain
        c, k = build_C(scheme, g)
        start_row, start_col = 0, 0
        for m_idx, marg in enumerate(scheme.marginals):
            x = scheme.design_matrix(m_idx)
            inv = np.linalg.solve(x, np.eye(x.shape[0]))
            rows = scheme.allocated_design_rows(m_idx)
            block = c[start_row : start_row + len(rows), start_col : start_col + x.shape[0]]
            np.testing.assert_allclose(block, inv[rows], atol=1e-12)
            start_row += len(rows)
            start_col += x.shape[0]

    def test_ac_block_free_rows(self, chain):
        # the AC block carries intercept, A, C as free rows; its own
        # highest-order row stays in C so that K can select it
        _, scheme = chain
        ac_rows = np.flatnonzero(scheme.marginal_of_row == 0)
        assert len(ac_rows) == 4
        assert sum(1 for r in ac_rows if r in scheme.free_rows) == 3

    def test_row_sums(self, chain):
        _, scheme = chain
        sums = scheme.C.sum(axis=1)
        assert abs(sums[scheme.intercept_row] - 1.0) < 1e-12
        others = np.delete(sums, scheme.intercept_row)
        np.testing.assert_allclose(others, 0.0, atol=1e-12)

    def test_K_rows_subset_of_C(self, chain):
        _, scheme = chain
        np.testing.assert_array_equal(scheme.K, scheme.C[scheme.zero_rows])


class TestLambdaFromP:
    def test_uniform_pair(self):
        g = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        scheme = build_marginal_scheme(g)
        lam = lambda_from_P(scheme, np.full(4, 0.25))
        assert abs(lam.free[0] - np.log(0.25)) < 1e-12
        np.testing.assert_allclose(lam.free[1:], 0.0, atol=1e-12)

    def test_log_odds_ratio_oracle(self):
        g = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        scheme = build_marginal_scheme(g)
        p = np.array([0.4, 0.1, 0.2, 0.3])
        lam = lambda_from_P(scheme, p)
        idx = [str(l) for l in scheme.free_labels].index("lambda[AB].AB(2,2)")
        np.testing.assert_allclose(lam.free[idx], 0.25 * np.log(6.0), atol=1e-12)

    def test_truth_round_trip(self, chain):
        _, scheme = chain
        lam = truth_param(scheme)
        p = invert_lambda(scheme, lam)
        back = lambda_from_P(scheme, p)
        np.testing.assert_allclose(back.param, lam, atol=1e-8)
        np.testing.assert_allclose(back.full[scheme.zero_rows], 0.0, atol=1e-10)
        assert abs(back.free[0] - (-1.4025)) < 5e-4  # implied intercept


class TestInvertLambda:
    def test_zero_vector_gives_uniform(self, chain):
        _, scheme = chain
        p = invert_lambda(scheme, np.zeros(scheme.n_param))
        np.testing.assert_allclose(p, 1.0 / 16, atol=1e-12)

    def test_huge_entry_does_not_converge(self, chain):
        _, scheme = chain
        lam = np.zeros(scheme.n_param)
        lam[3] = 50.0
        with pytest.raises(NonConvergenceError):
            invert_lambda(scheme, lam)

    def test_wrong_length_rejected(self, chain):
        _, scheme = chain
        with pytest.raises(ValueError, match="intercept"):
            invert_lambda(scheme, np.zeros(scheme.n_free))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_property(self, seed):
        scheme = _chain_scheme()
        rng = np.random.default_rng(seed)
        lam = rng.uniform(-0.5, 0.5, scheme.n_param)
        p = invert_lambda(scheme, lam)
        np.testing.assert_allclose(lambda_from_P(scheme, p).param, lam, atol=1e-6)

    def test_saturated_needs_no_guard(self):
        g = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        scheme = build_marginal_scheme(g)
        rng = np.random.default_rng(1)
        for _ in range(25):
            lam = rng.uniform(-2.0, 2.0, scheme.n_param)
            p = invert_lambda(scheme, lam)
            np.testing.assert_allclose(lambda_from_P(scheme, p).param, lam, atol=1e-8)


class TestOrderInvariance:
    def test_vertex_permutation_preserves_magnitudes(self):
        p = np.array([0.4, 0.1, 0.2, 0.3])
        g1 = from_edge_list([("A", 2), ("B", 2)], [("A", "B")])
        s1 = build_marginal_scheme(g1)
        # swap declaration order: cells reindex accordingly
        g2 = from_edge_list([("B", 2), ("A", 2)], [("A", "B")])
        s2 = build_marginal_scheme(g2)
        p2 = p.reshape(2, 2).T.ravel()  # (b, a) order with b fastest
        v1 = np.sort(np.abs(lambda_from_P(s1, p).free))
        v2 = np.sort(np.abs(lambda_from_P(s2, p2).free))
        np.testing.assert_allclose(v1, v2, atol=1e-12)
