"""Estimate containers and interval machinery shared by all experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass
class EstimateReport:
    """One Monte Carlo estimate with its uncertainty and provenance.

    point, ci_low, ci_high : the estimate and a 95% interval
    reps : replicates that completed
    censored : replicates aborted by a resource cap (counted, never silently
        folded into the estimate)
    metadata : free-form context (experiment id, parameters, seed, ...)
    """

    point: float
    ci_low: float
    ci_high: float
    reps: int
    censored: int = 0
    metadata: dict = field(default_factory=dict)

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def halfwidth(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


def binomial_report(successes: int, n: int, censored: int = 0, **metadata) -> EstimateReport:
    lo, hi = wilson_interval(successes, n)
    return EstimateReport(successes / n, lo, hi, n, censored, metadata)


def bootstrap_mean_ci(
    values: np.ndarray, rng: np.random.Generator, n_boot: int = 1000
) -> tuple[float, float]:
    """Percentile bootstrap interval for a mean."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("need at least one value")
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    means = values[idx].mean(axis=1)
    return float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5))


def mean_report(
    values: np.ndarray, rng: np.random.Generator, censored: int = 0, **metadata
) -> EstimateReport:
    values = np.asarray(values, dtype=np.float64)
    lo, hi = bootstrap_mean_ci(values, rng)
    return EstimateReport(float(values.mean()), lo, hi, values.size, censored, metadata)
