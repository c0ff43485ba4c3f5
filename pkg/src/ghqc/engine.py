"""One backward step: discounted conditional expectation on the log-asset grid.

For a node X_m the continuation value is

    disc * sum_j w_j * Q(X_m + nu + tau * z_j)

with z_j standard-normal quadrature nodes (sqrt(2) times the Gauss-Hermite
abscissas) and Q the spline through the node values. Arrays of node values
always carry the asset axis last, so a (levels, M+1) surface steps every
level at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .model import SpatialGrid, StepTransition
from .quadrature import GaussHermiteRule, gaussian_central_moments, moment_matched_weights
from .spline import SplineMode, fit, stencil

# multiplier(s_from[m, 1], s_to[m, q]) -> array (m, q)
StepWeight = Callable[[np.ndarray, np.ndarray], np.ndarray]


def quadrature_weights(rule: GaussHermiteRule, trans: StepTransition, moment_matched: bool = False) -> np.ndarray:
    """Probability weights attached to the nodes sqrt(2) * xi_j of ``rule``."""
    if not moment_matched:
        return rule.normal_weights
    scale = np.sqrt(2.0) * trans.tau
    mw = moment_matched_weights(rule, gaussian_central_moments(trans.tau, rule.order), scale)
    return mw.weights


def destinations(grid: SpatialGrid, trans: StepTransition, rule: GaussHermiteRule) -> np.ndarray:
    """X(t_n) reached from every node at every quadrature point, shape (M+1, q)."""
    return grid.x[:, None] + trans.nu + trans.tau * rule.normal_nodes[None, :]


def step_direct(values, grid: SpatialGrid, trans: StepTransition, rule: GaussHermiteRule,
                mode: SplineMode | str = SplineMode.FAST, weights: Optional[np.ndarray] = None,
                step_weight: Optional[StepWeight] = None) -> np.ndarray:
    """Fit a spline to ``values`` and integrate it node by node."""
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != grid.m + 1:
        raise ValueError(f"values have {v.shape[-1]} nodes, grid has {grid.m + 1}")
    w = rule.normal_weights if weights is None else np.asarray(weights)
    dest = destinations(grid, trans, rule)
    spl = fit(grid.x, np.moveaxis(v, -1, 0), mode)
    sampled = spl.eval(dest)                      # (M+1, q, ...)
    coef = np.broadcast_to(w, dest.shape)
    if step_weight is not None:
        coef = coef * step_weight(grid.s[:, None], grid.spot * np.exp(dest))
    if v.ndim > 1:
        coef = coef.reshape(coef.shape + (1,) * (v.ndim - 1))
    out = trans.disc * np.sum(coef * sampled, axis=1)
    return np.moveaxis(out, 0, -1)


@dataclass(frozen=True)
class StepOperator:
    """Sparse matrix H with ``apply(Q) = H @ Q`` along the asset axis."""

    matrix: sp.csr_matrix
    disc: float

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.shape[-1] != self.matrix.shape[1]:
            raise ValueError(f"values have {v.shape[-1]} nodes, operator expects {self.matrix.shape[1]}")
        if v.ndim == 1:
            return self.matrix @ v
        flat = v.reshape(-1, v.shape[-1])
        return np.asarray(self.matrix @ flat.T).T.reshape(v.shape)


def build_operator(grid: SpatialGrid, trans: StepTransition, rule: GaussHermiteRule,
                   weights: Optional[np.ndarray] = None,
                   step_weight: Optional[StepWeight] = None) -> StepOperator:
    """Fold quadrature weights and the fast-spline stencils into one sparse matrix.

    Every quadrature point is a 4-point combination of neighbouring nodes
    (including points beyond the grid, which use the linear continuation),
    so row m holds at most 4q nonzeros.
    """
    n = grid.m + 1
    w = rule.normal_weights if weights is None else np.asarray(weights)
    dest = destinations(grid, trans, rule)
    idx, lw = stencil(grid.x_min, grid.dx, n, dest)         # (n, q, 4)
    coef = np.broadcast_to(w[None, :], dest.shape)
    if step_weight is not None:
        coef = coef * step_weight(grid.s[:, None], grid.spot * np.exp(dest))
    data = trans.disc * coef[..., None] * lw
    rows = np.broadcast_to(np.arange(n)[:, None, None], idx.shape)
    mat = sp.csr_matrix((data.ravel(), (rows.ravel(), idx.ravel())), shape=(n, n))
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return StepOperator(mat, trans.disc)


def apply(op: StepOperator, values) -> np.ndarray:
    return op.apply(values)


@dataclass
class OperatorCache:
    """Reuse operators across steps whose transitions coincide."""

    grid: SpatialGrid
    rule: GaussHermiteRule
    moment_matched: bool = False
    _ops: dict = field(default_factory=dict)

    def get(self, trans: StepTransition, step_weight: Optional[StepWeight] = None,
            weight_key=None) -> StepOperator:
        key = (round(trans.nu, 15), round(trans.tau, 15), round(trans.disc, 15), weight_key)
        op = self._ops.get(key)
        if op is None:
            w = quadrature_weights(self.rule, trans, self.moment_matched)
            op = build_operator(self.grid, trans, self.rule, w, step_weight)
            self._ops[key] = op
        return op

    def __len__(self) -> int:
        return len(self._ops)
