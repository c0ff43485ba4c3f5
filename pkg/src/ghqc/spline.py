"""Natural cubic splines on a grid: full (tridiagonal) and fast central-difference forms.

Both forms evaluate through the same piecewise formula

    Q(x) = A Q_j + B Q_{j+1} + C Q''_j + D Q''_{j+1},   x_j <= x <= x_{j+1}

and differ only in where the second derivatives come from. Outside the knot
range the spline continues linearly with its one-sided boundary slope.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class InvalidGridError(ValueError):
    pass


class SplineMode(str, Enum):
    FULL = "full"
    FAST = "fast"


def solve_tridiagonal(sub, diag, sup, rhs):
    """Thomas algorithm. ``rhs`` may carry extra trailing columns."""
    n = len(diag)
    rhs = np.array(rhs, dtype=float)
    c = np.empty(n)
    d = np.empty_like(rhs)
    c[0] = sup[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - sub[i] * c[i - 1]
        c[i] = sup[i] / den if i < n - 1 else 0.0
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den
    for i in range(n - 2, -1, -1):
        d[i] -= c[i] * d[i + 1]
    return d


def _check_knots(knots) -> np.ndarray:
    x = np.asarray(knots, dtype=float)
    if x.ndim != 1 or len(x) < 3:
        raise InvalidGridError("need at least 3 knots (M >= 2)")
    if np.any(np.diff(x) <= 0.0):
        raise InvalidGridError("knots must be strictly increasing")
    return x


def _check_uniform(x: np.ndarray) -> float:
    h = (x[-1] - x[0]) / (len(x) - 1)
    if np.max(np.abs(np.diff(x) - h)) > 1e-9 * h:
        raise InvalidGridError("fast spline requires uniformly spaced knots")
    return h


@dataclass(frozen=True)
class Spline:
    """Cubic spline through ``values`` at ``knots``.

    ``values`` may be 2-D with shape (n_knots, k): each column is a separate
    function sampled on the same knots.
    """

    knots: np.ndarray
    values: np.ndarray
    second_derivs: np.ndarray
    mode: SplineMode

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        k = self.knots
        q = self.values
        d2 = self.second_derivs
        n = len(k)
        j = np.clip(np.searchsorted(k, x, side="right") - 1, 0, n - 2)
        h = k[j + 1] - k[j]
        a = (k[j + 1] - x) / h
        b = 1.0 - a
        c = (a ** 3 - a) * h * h / 6.0
        d = (b ** 3 - b) * h * h / 6.0
        if q.ndim > 1:
            a, b, c, d = (t[..., None] for t in (a, b, c, d))
        out = a * q[j] + b * q[j + 1] + c * d2[j] + d * d2[j + 1]

        lo = x < k[0]
        hi = x > k[-1]
        if np.any(lo) or np.any(hi):
            s0, s1 = self.boundary_slopes()
            if q.ndim > 1:
                lo_, hi_ = lo[..., None], hi[..., None]
                dx = x[..., None]
            else:
                lo_, hi_ = lo, hi
                dx = x
            out = np.where(lo_, q[0] + (dx - k[0]) * s0, out)
            out = np.where(hi_, q[-1] + (dx - k[-1]) * s1, out)
        return out

    def boundary_slopes(self):
        k, q, d2 = self.knots, self.values, self.second_derivs
        h0 = k[1] - k[0]
        h1 = k[-1] - k[-2]
        s0 = (q[1] - q[0]) / h0 - h0 * (2.0 * d2[0] + d2[1]) / 6.0
        s1 = (q[-1] - q[-2]) / h1 + h1 * (d2[-2] + 2.0 * d2[-1]) / 6.0
        return s0, s1


def fit_full(knots, values) -> Spline:
    """Natural cubic spline; second derivatives from the tridiagonal system."""
    x = _check_knots(knots)
    y = np.asarray(values, dtype=float)
    if y.shape[0] != len(x):
        raise ValueError("values and knots have different lengths")
    h = np.diff(x)
    n = len(x)
    d2 = np.zeros_like(y)
    if n > 2:
        sub = np.concatenate([[0.0], h[1:-1] / 6.0])
        diag = (h[:-1] + h[1:]) / 3.0
        sup = np.concatenate([h[1:-1] / 6.0, [0.0]])
        slope = np.diff(y, axis=0) / (h[:, None] if y.ndim > 1 else h)
        rhs = slope[1:] - slope[:-1]
        d2[1:-1] = solve_tridiagonal(sub, diag, sup, rhs)
    return Spline(x, y, d2, SplineMode.FULL)


def central_second_derivs(values, h: float) -> np.ndarray:
    """Three-point second differences, linearly extended to the end knots.

    The end values make the edge intervals coincide with the cubic through
    the first (last) four knots.
    """
    y = np.asarray(values, dtype=float)
    d2 = np.empty_like(y)
    d2[1:-1] = (y[2:] + y[:-2] - 2.0 * y[1:-1]) / (h * h)
    d2[0] = 2.0 * d2[1] - d2[2]
    d2[-1] = 2.0 * d2[-2] - d2[-3]
    return d2


def fit_fast(knots, values) -> Spline:
    """Cubic spline with central-difference second derivatives (uniform knots)."""
    x = _check_knots(knots)
    if len(x) < 4:
        raise InvalidGridError("fast spline needs at least 4 knots (M >= 3)")
    h = _check_uniform(x)
    y = np.asarray(values, dtype=float)
    if y.shape[0] != len(x):
        raise ValueError("values and knots have different lengths")
    return Spline(x, y, central_second_derivs(y, h), SplineMode.FAST)


def fit(knots, values, mode: SplineMode | str = SplineMode.FAST) -> Spline:
    if SplineMode(mode) is SplineMode.FULL:
        return fit_full(knots, values)
    return fit_fast(knots, values)


def eval_lagrange4(knots, values, x):
    """Four-point Lagrange interpolation on the stencil j-1..j+2 around x."""
    k = _check_knots(knots)
    if len(k) < 4:
        raise InvalidGridError("Lagrange stencil needs at least 4 knots")
    h = _check_uniform(k)
    x = np.asarray(x, dtype=float)
    if np.any(x < k[1]) or np.any(x > k[-2]):
        raise ValueError("x outside [x_1, x_{M-1}] has no centred 4-point stencil")
    y = np.asarray(values, dtype=float)
    j = np.clip(np.searchsorted(k, x, side="left") - 1, 1, len(k) - 3)
    out = np.zeros(np.shape(x) + y.shape[1:])
    for i in range(-1, 3):
        w = np.ones_like(x)
        for m in range(-1, 3):
            if m != i:
                w = w * (x - k[j + m]) / ((i - m) * h)
        out = out + (w[..., None] if y.ndim > 1 else w) * y[j + i]
    return out


def stencil(x0: float, h: float, n: int, x):
    """Index/weight stencil reproducing ``fit_fast(...).eval(x)``.

    Returns ``(idx, w)`` with trailing axis of length 4 so that
    ``eval(x) == sum(w * values[idx], axis=-1)`` for any values on the n
    uniform knots starting at x0 with spacing h. Points outside the knot
    range use the linear continuation, which is also a 4-point combination.
    """
    if n < 4:
        raise InvalidGridError("stencil needs at least 4 knots")
    x = np.asarray(x, dtype=float)
    u = (x - x0) / h
    j = np.clip(np.floor(u).astype(np.int64), 0, n - 2)
    start = np.clip(j - 1, 0, n - 4)
    t = u - start
    # Lagrange basis on nodes 0,1,2,3 evaluated at t
    w = np.stack([
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ], axis=-1)
    lo = u < 0.0
    hi = u > n - 1
    if np.any(lo) or np.any(hi):
        # value + slope * offset, slope of the edge cubic at the end knot
        d_lo = np.array([-11.0, 18.0, -9.0, 2.0]) / 6.0
        d_hi = np.array([-2.0, 9.0, -18.0, 11.0]) / 6.0
        e0 = np.array([1.0, 0.0, 0.0, 0.0])
        e3 = np.array([0.0, 0.0, 0.0, 1.0])
        w = np.where(lo[..., None], e0 + u[..., None] * d_lo, w)
        w = np.where(hi[..., None], e3 + (u - (n - 1))[..., None] * d_hi, w)
    idx = start[..., None] + np.arange(4)
    return idx, w
