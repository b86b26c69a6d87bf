"""Run metrics, success tiers and the 3-trials x 3-seeds evaluation.

Per run, measured against the trial's initial settings:

* final beam difference: MAE of the last applied settings, in micrometres;
* normalised beam improvement: 100 * (mae_final - mae_initial) / mae_initial,
  negative is better;
* normalised integrated MAE: 100 * sum(mae_t, t = 1..budget) / (budget *
  mae_initial); runs that terminated early hold their last observed MAE for
  the missing steps (and say so);
* successful steps: accelerator interactions performed, i.e. iterations
  that produced parsable settings, second attempts not counted extra.

A run succeeds when the final MAE improves on the initial MAE by at least
40 um (twice the real-world screen measurement accuracy). Over the 9-run
suite an optimizer is outright successful when every run succeeds,
partially successful at six or more, and single-trial successful when all
runs of at least one trial succeed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from ..optics import LatticeGeometry
from ..task import Trial
from .episode import RunRecord, run_episode

__all__ = [
    "RUN_SUCCESS_THRESHOLD_MM",
    "RunMetrics",
    "SuiteSummary",
    "compute_metrics",
    "evaluate",
    "summarize",
]

RUN_SUCCESS_THRESHOLD_MM = 0.040  # 40 um


@dataclass(frozen=True)
class RunMetrics:
    final_beam_difference_um: float
    normalized_improvement_pct: float | None
    normalized_integrated_mae_pct: float | None
    successful_steps: int
    run_success: bool
    normalization_undefined: bool
    integrated_fill_applied: bool


def compute_metrics(record: RunRecord, budget: int = 50) -> RunMetrics:
    """Score one run. ``budget`` is the nominal step count for integration."""
    if not record.samples:
        raise ValueError("run record has no samples")
    mae_initial = record.samples[0].mae
    mae_final = record.samples[-1].mae

    if mae_initial == 0.0:
        # Normalised metrics divide by the initial MAE; flag and leave unset.
        return RunMetrics(
            final_beam_difference_um=mae_final * 1000.0,
            normalized_improvement_pct=None,
            normalized_integrated_mae_pct=None,
            successful_steps=record.steps_taken,
            run_success=(mae_initial - mae_final) >= RUN_SUCCESS_THRESHOLD_MM,
            normalization_undefined=True,
            integrated_fill_applied=record.steps_taken < budget,
        )

    improvement = 100.0 * (mae_final - mae_initial) / mae_initial
    maes = [sample.mae for sample in record.samples[1:]]
    fill_applied = len(maes) < budget
    hold = maes[-1] if maes else mae_initial
    maes += [hold] * (budget - len(maes))
    integrated = 100.0 * math.fsum(maes) / (budget * mae_initial)

    return RunMetrics(
        final_beam_difference_um=mae_final * 1000.0,
        normalized_improvement_pct=improvement,
        normalized_integrated_mae_pct=integrated,
        successful_steps=record.steps_taken,
        run_success=(mae_initial - mae_final) >= RUN_SUCCESS_THRESHOLD_MM,
        normalization_undefined=False,
        integrated_fill_applied=fill_applied,
    )


def _mean_std(values: Sequence[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


@dataclass
class SuiteSummary:
    """Aggregated evaluation of one optimizer over the whole suite."""

    optimizer_id: str
    records: list[RunRecord]
    metrics: list[RunMetrics]
    aggregates: dict[str, tuple[float | None, float | None]]
    successes: int
    successes_per_trial: dict[str, tuple[int, int]]  # trial_id -> (ok, total)
    outright_success: bool
    partial_success: bool
    single_trial_success: bool

    @property
    def total_runs(self) -> int:
        return len(self.records)


def summarize(optimizer_id: str, records: Sequence[RunRecord], budget: int = 50) -> SuiteSummary:
    metrics = [compute_metrics(record, budget=budget) for record in records]

    aggregates = {}
    for key in (
        "final_beam_difference_um",
        "normalized_improvement_pct",
        "normalized_integrated_mae_pct",
        "successful_steps",
    ):
        values = [
            float(getattr(m, key)) for m in metrics if getattr(m, key) is not None
        ]
        aggregates[key] = _mean_std(values)

    per_trial: dict[str, tuple[int, int]] = {}
    for record, metric in zip(records, metrics):
        ok, total = per_trial.get(record.trial_id, (0, 0))
        per_trial[record.trial_id] = (ok + int(metric.run_success), total + 1)

    successes = sum(int(m.run_success) for m in metrics)
    total = len(records)
    partial_threshold = math.ceil(2 * total / 3)  # 6 of 9 on the canonical suite
    return SuiteSummary(
        optimizer_id=optimizer_id,
        records=list(records),
        metrics=metrics,
        aggregates=aggregates,
        successes=successes,
        successes_per_trial=per_trial,
        outright_success=total > 0 and successes == total,
        partial_success=successes >= partial_threshold > 0,
        single_trial_success=any(ok == n and n > 0 for ok, n in per_trial.values()),
    )


def evaluate(
    trials: Sequence[Trial],
    optimizer_factory: Callable[[Trial, int], object],
    optimizer_id: str,
    n_seeds: int = 3,
    budget: int = 50,
    geometry: LatticeGeometry | None = None,
    noise_sigma: float = 0.0,
    workers: int = 1,
) -> SuiteSummary:
    """Run the full evaluation protocol for one optimizer.

    Each trial is run ``n_seeds`` times; ``optimizer_factory(trial, seed)``
    must return a fresh optimizer per run. Runs are independent, so a
    worker pool may execute them in parallel without changing any result;
    records are always ordered by (trial, seed).
    """
    jobs = [(trial, seed) for trial in trials for seed in range(n_seeds)]

    def one(job: tuple[Trial, int]) -> RunRecord:
        trial, seed = job
        optimizer = optimizer_factory(trial, seed)
        return run_episode(
            trial,
            optimizer,
            budget=budget,
            seed=seed,
            geometry=geometry,
            noise_sigma=noise_sigma,
            optimizer_id=optimizer_id,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, jobs))
    else:
        records = [one(job) for job in jobs]
    return summarize(optimizer_id, records, budget=budget)
