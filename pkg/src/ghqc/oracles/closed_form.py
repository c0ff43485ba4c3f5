"""Lognormal closed form for European calls and puts."""

from __future__ import annotations

import math

from scipy.special import ndtr


def closed_form_european(spot: float, strike: float, phi: int, mu: float, r: float, sigma: float,
                         maturity: float) -> float:
    """e^{-rT} E[max(0, phi (S_T - K))] with ln S_T ~ N(ln S + (mu - sigma^2/2) T, sigma^2 T)."""
    if sigma <= 0.0 or maturity <= 0.0:
        raise ValueError("sigma and maturity must be positive")
    if phi not in (1, -1):
        raise ValueError("phi must be +1 or -1")
    fwd = spot * math.exp(mu * maturity)
    sd = sigma * math.sqrt(maturity)
    if strike <= 0.0:
        return math.exp(-r * maturity) * max(0.0, phi * (fwd - strike))
    d1 = (math.log(fwd / strike) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    return math.exp(-r * maturity) * phi * (fwd * ndtr(phi * d1) - strike * ndtr(phi * d2))
