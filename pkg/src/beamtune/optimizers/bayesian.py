"""Bayesian optimization of the magnet settings.

The first proposals come from a scrambled low-discrepancy design over the
actuator box. Once enough samples exist, a Matern-5/2 Gaussian process is
fitted to (normalized settings -> objective) and the next proposal
maximises expected improvement below the best objective seen so far:
4096 quasi-random candidates are scored and the best few refined locally.

Everything is deterministic given the seed, including the candidate
streams, so repeated runs reproduce bit-identical proposal sequences.
"""

from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from ..task import MagnetSettings, Sample
from .base import box_bounds, denormalize, normalize
from .gp import GaussianProcess, GPFitError, expected_improvement

__all__ = ["BayesianOptimizer"]


class BayesianOptimizer:
    """GP + expected improvement proposal strategy.

    The final proposal of a budgeted run re-applies the best settings seen
    so far instead of maximising EI: the run is scored on the last applied
    configuration, and a tuning controller leaves the machine on its best
    known settings rather than on an exploration point.

    Parameters
    ----------
    seed:         drives the initial design and all candidate streams.
    n_init:       history size below which the low-discrepancy design is
                  used instead of the surrogate (the reset measurement
                  counts towards it).
    n_candidates: quasi-random EI candidates per step (power of two).
    n_refine:     how many of the best candidates get local refinement.
    budget:       proposals per run; the budget-th proposal returns to the
                  incumbent. None disables the return-to-best step.
    """

    def __init__(
        self,
        seed: int = 0,
        n_init: int = 5,
        n_candidates: int = 4096,
        n_refine: int = 8,
        budget: int | None = 50,
    ) -> None:
        self.seed = int(seed)
        self.n_init = int(n_init)
        self.n_candidates = int(n_candidates)
        self.n_refine = int(n_refine)
        self.budget = budget
        self.fallback_steps: list[int] = []
        self._warm_start: np.ndarray | None = None
        self._rng = np.random.default_rng(seed)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # power-of-two draw sizes only
            sobol = qmc.Sobol(d=5, scramble=True, seed=self.seed)
            count = max(self.n_init - 1, 1)
            size = 1 << (count - 1).bit_length()
            self._design = sobol.random(size)[:count] * 2.0 - 1.0

    # -- helpers --------------------------------------------------------------

    def _candidates(self, step: int) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sobol = qmc.Sobol(d=5, scramble=True, seed=self.seed + 7919 * step)
            return sobol.random(self.n_candidates) * 2.0 - 1.0

    def _random_settings(self) -> MagnetSettings:
        low, high = box_bounds()
        return MagnetSettings(*(float(v) for v in self._rng.uniform(low, high)))

    # -- interface -------------------------------------------------------------

    def propose(self, history: Sequence[Sample]) -> MagnetSettings:
        n = len(history)
        if self.budget is not None and n >= self.budget:
            return min(history, key=lambda s: s.objective).settings
        if n < self.n_init:
            return denormalize(self._design[n - 1])

        X = np.array([normalize(s.settings) for s in history])
        y = np.array([s.objective for s in history])
        try:
            gp = GaussianProcess.fit(X, y, warm_start=self._warm_start)
        except GPFitError:
            self.fallback_steps.append(n)
            return self._random_settings()
        self._warm_start = gp.log_theta

        candidates = self._candidates(n)
        ei = expected_improvement(gp, candidates)
        order = np.argsort(-ei)
        starts = candidates[order[: self.n_refine]]

        def negative_ei(u: np.ndarray) -> float:
            return -float(expected_improvement(gp, u[None, :])[0])

        best_u = candidates[order[0]]
        best_ei = float(ei[order[0]])
        for start in starts:
            result = optimize.minimize(
                negative_ei,
                start,
                method="L-BFGS-B",
                bounds=[(-1.0, 1.0)] * 5,
                options={"maxiter": 30},
            )
            if -result.fun > best_ei:
                best_ei = -float(result.fun)
                best_u = np.clip(result.x, -1.0, 1.0)

        if not np.all(np.isfinite(best_u)):
            self.fallback_steps.append(n)
            return self._random_settings()
        return denormalize(best_u)
