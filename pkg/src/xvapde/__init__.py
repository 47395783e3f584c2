"""Semilinear Black-Scholes pricing with default and funding adjustments.

The nonlinear pricing equation is solved by monotone iterations between a
super- and a subsolution. Each iterate is a linear problem, solved either
with an explicit Gaussian kernel or by one of the cross-check backends.
"""

from .config import ConfigError, RunConfig, load_config, parse_config
from .evolution import CoefficientIntegrals, duhamel_solve, evolution_kernel, heat_kernel, propagate
from .fd import FdConfig, fd_solve
from .grid import Field, SpatialGrid, make_grid, weighted_l2, weighted_sup
from .iterate import IterationConfig, IterationReport, MonotonicityError, back_transform, iterate_once, run_monotone
from .mc import McConfig, mc_propagate, mc_solve
from .model import Payoff, RiskParams, TimeCurve, build_reaction, eval_F, eval_F_tilde, eval_G

__all__ = [
    "CoefficientIntegrals",
    "ConfigError",
    "FdConfig",
    "Field",
    "IterationConfig",
    "IterationReport",
    "McConfig",
    "MonotonicityError",
    "Payoff",
    "RiskParams",
    "RunConfig",
    "SpatialGrid",
    "TimeCurve",
    "back_transform",
    "build_reaction",
    "duhamel_solve",
    "eval_F",
    "eval_F_tilde",
    "eval_G",
    "evolution_kernel",
    "fd_solve",
    "heat_kernel",
    "iterate_once",
    "load_config",
    "make_grid",
    "mc_propagate",
    "mc_solve",
    "parse_config",
    "propagate",
    "run_monotone",
    "weighted_l2",
    "weighted_sup",
]
__version__ = "0.1.0"
