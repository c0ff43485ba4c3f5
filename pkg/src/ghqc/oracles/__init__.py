"""Independent references: Monte Carlo, Crank-Nicolson and closed form."""

from .closed_form import closed_form_european
from .fd import CrankNicolsonStepper, FdConfig, cn_fd_price
from .mc import McConfig, mc_price

__all__ = ["closed_form_european", "CrankNicolsonStepper", "FdConfig", "cn_fd_price", "McConfig", "mc_price"]
