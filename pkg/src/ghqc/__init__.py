"""Option pricing by Gauss-Hermite quadrature on cubic-spline value functions."""

from .quadrature import GaussHermiteRule, MomentWeights, generate_rule, integrate, moment_matched_weights
from .spline import Spline, SplineMode, eval_lagrange4, fit_fast, fit_full
from .model import MarketParams, SpatialGrid, StepTransition, TimeGrid, build_grid, transition
from .engine import StepOperator, apply, build_operator, step_direct
from .pricers import Discretization, Market, PricingRequest, PricingResult, price

__version__ = "0.1.0"
