"""Proposal strategies sharing one interface: history in, next settings out.

All strategies are function optimizers: they see only the applied settings
and the scalar objective of past samples, never the beam parameters. Every
strategy is deterministic given its seed and the history it is shown, and
always returns finite settings; the task clamps to the actuator box on
application.
"""

from .base import DoNothing, Optimizer, RandomSearch, ReinforcementPolicyOptimizer
from .bayesian import BayesianOptimizer
from .extremum_seeking import ExtremumSeeking
from .gp import GaussianProcess, expected_improvement

__all__ = [
    "BayesianOptimizer",
    "DoNothing",
    "ExtremumSeeking",
    "GaussianProcess",
    "Optimizer",
    "RandomSearch",
    "ReinforcementPolicyOptimizer",
    "expected_improvement",
]
