"""Gradient-based optimization toolkit with closed-form convergence predictors."""

__version__ = "0.1.0"

from . import analysis, cg, linalg, linesearch, objective, optimizers, schedulers, second_order  # noqa: E402,F401
from .errors import *  # noqa: E402,F401,F403
