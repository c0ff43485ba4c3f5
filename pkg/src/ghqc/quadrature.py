"""Gauss-Hermite rules and moment-matched quadrature weights."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

SQRT_PI = math.sqrt(math.pi)
_PI_M4 = math.pi ** -0.25


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussHermiteRule:
    """Nodes and weights for integrals against exp(-x**2) on the real line."""

    order: int
    abscissas: np.ndarray
    weights: np.ndarray

    @property
    def normal_nodes(self) -> np.ndarray:
        """Nodes for a standard normal variable (x * sqrt(2))."""
        return math.sqrt(2.0) * self.abscissas

    @property
    def normal_weights(self) -> np.ndarray:
        """Probability weights for a standard normal variable (sum to one)."""
        return self.weights / SQRT_PI


@dataclass(frozen=True)
class MomentWeights:
    order: int
    weights: np.ndarray
    node_scale: float
    condition: float


def _orthonormal_hermite(x: float, q: int) -> tuple[float, float]:
    """Return (p_q(x), p_{q-1}(x)) for the orthonormal Hermite recurrence."""
    p1 = _PI_M4
    p2 = 0.0
    for j in range(1, q + 1):
        p3 = p2
        p2 = p1
        p1 = x * math.sqrt(2.0 / j) * p2 - math.sqrt((j - 1) / j) * p3
    return p1, p2


def _initial_guess(q: int, i: int, found: list[float]) -> float:
    # asymptotic starting values for the largest roots, then extrapolate inward
    if i == 0:
        return math.sqrt(2 * q + 1) - 1.85575 * (2 * q + 1) ** (-1.0 / 6.0)
    if i == 1:
        return found[0] - 1.14 * q ** 0.426 / found[0]
    if i == 2:
        return 1.86 * found[1] - 0.86 * found[0]
    if i == 3:
        return 1.91 * found[2] - 0.91 * found[1]
    return 2.0 * found[i - 1] - found[i - 2]


def generate_rule(q: int, max_iter: int = 100) -> GaussHermiteRule:
    """Compute the q-point Gauss-Hermite rule by Newton iteration.

    Roots are found from the largest downwards; the orthonormal form of the
    three-term recurrence keeps the derivative finite for large q, so the
    weights 2 / p'_q(x)**2 never involve q! or 2**q.
    """
    if not 2 <= q <= 64:
        raise ValueError(f"quadrature order must be in [2, 64], got {q}")
    half = (q + 1) // 2
    roots: list[float] = []
    weights: list[float] = []
    for i in range(half):
        z = _initial_guess(q, i, roots)
        for _ in range(max_iter):
            p, pm1 = _orthonormal_hermite(z, q)
            dp = math.sqrt(2.0 * q) * pm1
            step = p / dp
            z -= step
            if abs(step) <= 1e-15 * max(1.0, abs(z)):
                break
        else:
            raise QuadratureError(f"Newton iteration did not converge for q={q}, node {i}")
        # one polish step at the converged point
        p, pm1 = _orthonormal_hermite(z, q)
        dp = math.sqrt(2.0 * q) * pm1
        z -= p / dp
        p, pm1 = _orthonormal_hermite(z, q)
        dp = math.sqrt(2.0 * q) * pm1
        if abs(p) > 1e-13 * max(1.0, abs(dp)):
            raise QuadratureError(f"root residual too large for q={q}, node {i}: {p:.3e}")
        roots.append(z)
        weights.append(2.0 / (dp * dp))
    if q % 2 == 1:
        roots[-1] = 0.0
    pos = np.array(roots[::-1])
    w_pos = np.array(weights[::-1])
    if q % 2 == 1:
        x = np.concatenate([-pos[:0:-1], pos])
        w = np.concatenate([w_pos[:0:-1], w_pos])
    else:
        x = np.concatenate([-pos[::-1], pos])
        w = np.concatenate([w_pos[::-1], w_pos])
    x.flags.writeable = False
    w.flags.writeable = False
    return GaussHermiteRule(q, x, w)


def integrate(rule: GaussHermiteRule, f) -> float:
    """Approximate the integral of exp(-x**2) f(x) over the real line."""
    x = rule.abscissas
    try:
        vals = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
    except (TypeError, ValueError):
        vals = np.array([f(float(v)) for v in x], dtype=float)
    return float(np.dot(rule.weights, vals))


def gaussian_central_moments(sd: float, count: int) -> np.ndarray:
    """Central moments E[(X - mean)^K], K = 0..count-1, of a normal with std sd."""
    out = np.zeros(count)
    out[0] = 1.0
    for k in range(2, count, 2):
        out[k] = out[k - 2] * (k - 1) * sd * sd
    return out


def moment_matched_weights(rule: GaussHermiteRule, central_moments, node_scale: float,
                           max_order: int = 20) -> MomentWeights:
    """Solve sum_j W_j (node_scale * xi_j)^K = m_K for K = 0..q-1.

    Rows are scaled by (node_scale * max|xi|)^K before the LU solve so the
    system stays well conditioned for small node scales.
    """
    q = rule.order
    m = np.asarray(central_moments, dtype=float)
    if m.shape != (q,):
        raise ValueError(f"need {q} central moments (K=0..{q - 1}), got shape {m.shape}")
    if q > max_order:
        raise ValueError(f"moment matching is limited to q <= {max_order}, got {q}")
    if abs(m[0] - 1.0) > 1e-12:
        raise ValueError("the zeroth central moment must be 1")
    if node_scale <= 0.0:
        raise ValueError("node_scale must be positive")
    nodes = node_scale * rule.abscissas
    span = float(np.max(np.abs(nodes)))
    powers = np.arange(q)[:, None]
    a = (nodes[None, :] / span) ** powers
    b = m / span ** np.arange(q)
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > 1e13:
        raise QuadratureError(f"moment system is ill-conditioned (cond ~ {cond:.2e}) for q={q}")
    lu, piv = scipy.linalg.lu_factor(a)
    w = scipy.linalg.lu_solve((lu, piv), b)
    # one step of iterative refinement
    w += scipy.linalg.lu_solve((lu, piv), b - a @ w)
    resid = np.max(np.abs(a @ w - b)) / max(1.0, np.max(np.abs(b)))
    if resid > 1e-9:
        raise QuadratureError(f"moment system residual {resid:.2e} exceeds 1e-9 (cond ~ {cond:.2e})")
    return MomentWeights(q, w, float(node_scale), cond)
