"""Meromorphic solutions of f'(x) + f'(x+a) + f(x)**2 - f(x+a)**2 = mu.

The package builds formal large-z series, continues them numerically into
the complex plane slab by slab, locates and classifies the poles, and checks
the small-z asymptotics through an integro-differential fixed point.
"""
from .errors import DDEError
from .series_core import DDEParameters, formal_solution, lambda_from_mu
from .special_functions import Lattice, mu0_solution
from .sector_geometry import sector
from .continuation_engine import ContinuationConfig, continue_patch, series_patch

__version__ = "0.1.0"

__all__ = [
    "DDEError",
    "DDEParameters",
    "formal_solution",
    "lambda_from_mu",
    "Lattice",
    "mu0_solution",
    "sector",
    "ContinuationConfig",
    "continue_patch",
    "series_patch",
    "__version__",
]
