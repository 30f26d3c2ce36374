"""Change-of-variables Jacobian between probability tables and interactions.

The probability-space samplers propose conditional probability tables and
accept in interaction space, so their ratios need
``|det d(Pi) / d(lambda, xi)|`` where ``xi`` is the tail of the probability
vectorisation that balances dimensions.  The computation follows the chain

    Delta = dP/dPi   ->   H = M Delta,  Gamma = M P,
    d(lambda)/dPi = C (H / Gamma)      (rows at the sampled interactions),

with ``Delta`` assembled analytically: an observed vertex's conditional
probability enters each cell's factorisation at most once (sign +1 at its own
level, -1 at the dropped last level), and a latent vertex contributes the
two-term difference of its own level against the dropped one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _tables
from .exceptions import SingularJacobianError
from .graphs import AugmentedDag
from .model import ModelContext, ProbParams, context_for, joint_from_params
from .parameterization import MarginalScheme

__all__ = [
    "XiSelector",
    "JacobianReport",
    "delta_matrix",
    "jacobian_matrix",
    "log_abs_det_jacobian",
    "select_xi",
    "minor_route_log_abs_det",
]

_LOGDET_FLOOR = np.log(1e-300)


@dataclass(frozen=True)
class XiSelector:
    """Positions of the dimension-balancing entries in the Pi vectorisation."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if list(idx) != sorted(set(idx)):
            raise ValueError("xi indices must be sorted and unique")
        object.__setattr__(self, "indices", idx)

    @property
    def d_xi(self) -> int:
        return len(self.indices)

    @classmethod
    def tail(cls, d_pi: int, d_xi: int) -> "XiSelector":
        if d_xi < 0 or d_xi > d_pi:
            raise ValueError(f"cannot select {d_xi} tail entries out of {d_pi}")
        return cls(tuple(range(d_pi - d_xi, d_pi)))


@dataclass
class JacobianReport:
    """Delta matrix, square forward Jacobian, its log |det| and conditioning.

    ``log_abs_det`` is for the *forward* map ``(lambda, xi) = f(Pi)``; the
    acceptance ratios use the reverse direction, see
    :func:`log_abs_det_jacobian`.
    """

    delta: np.ndarray
    jac: np.ndarray
    log_abs_det: float
    condition_estimate: float


def delta_matrix(
    pp: ProbParams,
    dag: AugmentedDag | None = None,
    ctx: ModelContext | None = None,
    p_aug=None,
) -> np.ndarray:
    """Derivatives of the observed cell probabilities w.r.t. each Pi entry.

    Returns the ``(n_cells, d_pi)`` matrix with columns in the canonical Pi
    vectorisation order.  Requires interior tables (strictly positive rows).
    """
    ctx = ctx or context_for(dag or pp.dag)
    if p_aug is None:
        p_aug, _ = joint_from_params(pp, ctx=ctx)
    delta = np.zeros((ctx.n_obs, ctx.d_pi))
    col = 0
    for k in range(len(ctx.names)):
        lv = ctx.levels[k]
        pidx = ctx.parent_idx[k]
        if k >= ctx.n_obs_vars:
            # latent vertex: sources, so a single parent configuration
            t = ctx.latent_margin(p_aug, (k,))
            pi = pp.tables[k][0]
            for ju in range(lv - 1):
                delta[:, col] = t[ju] / pi[ju] - t[lv - 1] / pi[lv - 1]
                col += 1
            continue
        plev = [ctx.levels[j] for j in pidx]
        cfg_grid = _tables.cell_levels(plev)
        obs_par = [(pos, j) for pos, j in enumerate(pidx) if j < ctx.n_obs_vars]
        lat_par = [(pos, j) for pos, j in enumerate(pidx) if j >= ctx.n_obs_vars]
        subset = tuple(j for _, j in lat_par)
        t = ctx.latent_margin(p_aug, subset)
        iu = ctx.obs_grid[:, k]
        plus = {ju: iu == ju for ju in range(lv - 1)}
        minus = iu == lv - 1
        for cfg in range(ctx.n_cfg[k]):
            clv = cfg_grid[cfg]
            mask = np.ones(ctx.n_obs, dtype=bool)
            for pos, j in obs_par:
                mask &= ctx.obs_grid[:, j] == clv[pos]
            lcfg, stride = 0, 1
            for pos, j in lat_par:
                lcfg += int(clv[pos]) * stride
                stride *= ctx.levels[j]
            base = np.where(mask, t[lcfg] / pp.tables[k][cfg][iu], 0.0)
            for ju in range(lv - 1):
                delta[:, col] = np.where(plus[ju], base, np.where(minus, -base, 0.0))
                col += 1
    return delta


def jacobian_matrix(
    pp: ProbParams,
    scheme: MarginalScheme,
    dag: AugmentedDag | None = None,
    xi: XiSelector | None = None,
    ctx: ModelContext | None = None,
    p_aug=None,
    p=None,
    compute_condition: bool = True,
) -> JacobianReport:
    """Square Jacobian of the map from Pi to the sampled interactions plus xi.

    Rows are the gradients of the non-intercept free interactions, followed by
    coordinate selectors for the xi entries (empty when dimensions already
    balance).  Raises :class:`SingularJacobianError` when |det| falls below
    1e-300; callers treat the move as rejected.
    """
    ctx = ctx or context_for(dag or pp.dag)
    if p_aug is None or p is None:
        p_aug, p = joint_from_params(pp, ctx=ctx)
    if xi is None:
        xi = XiSelector.tail(ctx.d_pi, ctx.d_pi - scheme.n_param)
    if scheme.n_param + xi.d_xi != ctx.d_pi:
        raise ValueError(
            f"dimension imbalance: {scheme.n_param} interactions + {xi.d_xi} xi "
            f"entries != dim(Pi) = {ctx.d_pi}"
        )
    delta = delta_matrix(pp, ctx=ctx, p_aug=p_aug)
    gamma = scheme.M @ p
    h = (scheme.M @ delta) / gamma[:, None]
    grad = scheme.C @ h
    jac = np.empty((ctx.d_pi, ctx.d_pi))
    jac[: scheme.n_param] = grad[scheme.param_rows]
    if xi.d_xi:
        sel = np.zeros((xi.d_xi, ctx.d_pi))
        sel[np.arange(xi.d_xi), list(xi.indices)] = 1.0
        jac[scheme.n_param :] = sel
    sign, logdet = np.linalg.slogdet(jac)
    if sign == 0.0 or logdet < _LOGDET_FLOOR:
        raise SingularJacobianError("Jacobian determinant below 1e-300 in magnitude")
    cond = float(np.linalg.cond(jac)) if compute_condition else float("nan")
    return JacobianReport(delta, jac, float(logdet), cond)


def log_abs_det_jacobian(
    pp: ProbParams,
    scheme: MarginalScheme,
    dag: AugmentedDag | None = None,
    xi: XiSelector | None = None,
    ctx: ModelContext | None = None,
) -> float:
    """log |det dPi / d(lambda, xi)|, the direction the acceptance ratios use."""
    return -jacobian_matrix(pp, scheme, dag=dag, xi=xi, ctx=ctx).log_abs_det


def select_xi(
    pp: ProbParams,
    scheme: MarginalScheme,
    dag: AugmentedDag | None = None,
    ctx: ModelContext | None = None,
    rank_rtol: float = 1e-9,
) -> XiSelector:
    """Pick dimension-balancing Pi coordinates that keep the Jacobian regular.

    The sampled interactions are constant along the gauge directions of the
    latent parameterisation (the kernel of their gradient), so the xi
    coordinates must span that kernel when projected onto it.  Taking simply
    the tail of the vectorisation can fail structurally - identified
    coordinates such as a source vertex's own probability carry no gauge
    freedom - so the kernel is computed at ``pp`` and a rank-revealing QR
    picks the best-conditioned coordinate subset.  Chains choose xi once at
    their initial state and keep it fixed.

    Raises ``ValueError`` when the gradient rank falls short of the number of
    sampled interactions: then the latent cardinality is too small for the
    parameterisation to cover the model and no xi choice exists.
    """
    ctx = ctx or context_for(dag or pp.dag)
    p_aug, p = joint_from_params(pp, ctx=ctx)
    delta = delta_matrix(pp, ctx=ctx, p_aug=p_aug)
    gamma = scheme.M @ p
    grad = (scheme.C @ ((scheme.M @ delta) / gamma[:, None]))[scheme.param_rows]
    d_xi = ctx.d_pi - scheme.n_param
    if d_xi < 0:
        raise ValueError(
            f"dim(Pi) = {ctx.d_pi} < {scheme.n_param} sampled interactions; "
            "increase latent_levels"
        )
    _, s, vt = np.linalg.svd(grad)
    if s[-1] <= rank_rtol * s[0]:
        rank = int(np.sum(s > rank_rtol * s[0]))
        raise ValueError(
            f"probability parameterisation spans only {rank} of {scheme.n_param} "
            "interaction directions; the latent cardinality is too small for this "
            "graph - increase latent_levels"
        )
    if d_xi == 0:
        return XiSelector(())
    kernel = vt[scheme.n_param :]  # rows span the gauge directions
    _, _, piv = scipy.linalg.qr(kernel, pivoting=True)
    return XiSelector(tuple(sorted(int(i) for i in piv[:d_xi])))


def minor_route_log_abs_det(
    pp: ProbParams,
    scheme: MarginalScheme,
    dag: AugmentedDag | None = None,
    xi: XiSelector | None = None,
    ctx: ModelContext | None = None,
) -> float:
    """Forward log |det| via the minor that drops the xi columns.

    Expanding the selector rows shows the full determinant equals, up to
    sign, the determinant of the interaction gradients restricted to the
    non-xi columns of Pi; this is the independent route used to cross-check
    :func:`jacobian_matrix`.
    """
    ctx = ctx or context_for(dag or pp.dag)
    if xi is None:
        xi = XiSelector.tail(ctx.d_pi, ctx.d_pi - scheme.n_param)
    p_aug, p = joint_from_params(pp, ctx=ctx)
    delta = delta_matrix(pp, ctx=ctx, p_aug=p_aug)
    gamma = scheme.M @ p
    grad = scheme.C @ ((scheme.M @ delta) / gamma[:, None])
    keep = np.setdiff1d(np.arange(ctx.d_pi), np.asarray(xi.indices, dtype=int))
    minor = grad[np.ix_(scheme.param_rows, keep)]
    sign, logdet = np.linalg.slogdet(minor)
    if sign == 0.0 or logdet < _LOGDET_FLOOR:
        raise SingularJacobianError("minor determinant below 1e-300 in magnitude")
    return float(logdet)
