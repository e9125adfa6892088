"""Summary statistics for replicated runs: quartiles, reductions, CIs, tests.

Quartiles use linear interpolation between order statistics (the convention
is named in report headers).  Confidence intervals are Student-t over
run-level values.  The significance test is a two-sided Mann-Whitney U: the
exact null distribution for small tie-free samples, the tie-corrected normal
approximation otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .errors import (
    EmptySample,
    InsufficientRuns,
    InsufficientSample,
    ZeroBaseline,
)

QUARTILE_CONVENTION = "linear interpolation between order statistics"
SIGNIFICANCE_TEST_NAME = "two-sided Mann-Whitney U"
SIGNIFICANCE_LEVEL = 0.05
MIN_TEST_SAMPLE = 3


@dataclass(frozen=True)
class SummaryStats:
    """Five-number summary plus mean, over per-nation-per-run scores."""

    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float
    n: int


@dataclass(frozen=True)
class DayStats:
    mean: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class DailySeriesStats:
    """Per-day mean and 95% confidence band across runs."""

    days: tuple[DayStats, ...]

    def __len__(self) -> int:
        return len(self.days)

    def __getitem__(self, index: int) -> DayStats:
        return self.days[index]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    significant_at_0_05: bool


def summarize(samples: Sequence[float]) -> SummaryStats:
    """Five-number summary with linearly interpolated quartiles."""
    if len(samples) == 0:
        raise EmptySample("summarize needs at least one value")
    values = np.asarray(samples, dtype=float)
    q1, median, q3 = np.percentile(values, [25, 50, 75], method="linear")
    return SummaryStats(
        mean=math.fsum(values) / len(values),
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        min=float(values.min()),
        max=float(values.max()),
        n=len(values),
    )


def percent_reduction(baseline_mean: float, treatment_mean: float) -> float:
    """100 * (baseline - treatment) / baseline."""
    if baseline_mean == 0:
        raise ZeroBaseline("percent reduction against a zero baseline is undefined")
    return 100.0 * (baseline_mean - treatment_mean) / baseline_mean


def t_critical(confidence: float, dof: int) -> float:
    """Two-sided Student-t critical value, e.g. 2.2621... for 95% and 9 dof."""
    return float(sps.t.ppf(0.5 + confidence / 2.0, dof))


def ci95_per_day(per_run_daily_means: Sequence[Sequence[float]]) -> DailySeriesStats:
    """Per day: mean +/- t(0.975, n-1) * s / sqrt(n) over run-level values."""
    n_runs = len(per_run_daily_means)
    if n_runs < 2:
        raise InsufficientRuns("confidence intervals need at least two runs")
    matrix = np.asarray(per_run_daily_means, dtype=float)
    if matrix.ndim != 2:
        raise InsufficientRuns("all runs must have the same number of days")
    critical = t_critical(0.95, n_runs - 1)
    days = []
    for column in matrix.T:
        mean = float(np.sum(column)) / n_runs
        spread = float(np.std(column, ddof=1))
        half_width = critical * spread / math.sqrt(n_runs)
        days.append(DayStats(mean=mean, ci_low=mean - half_width, ci_high=mean + half_width))
    return DailySeriesStats(days=tuple(days))


def significance_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sided Mann-Whitney U over run-level scores.

    Degenerate all-tied input short-circuits to p = 1.0 so tie correction
    never divides by zero.
    """
    if len(a) < MIN_TEST_SAMPLE or len(b) < MIN_TEST_SAMPLE:
        raise InsufficientSample(
            f"significance test needs {MIN_TEST_SAMPLE}+ values per side, "
            f"got {len(a)} and {len(b)}"
        )
    pooled = set(a) | set(b)
    if len(pooled) == 1:
        return TestResult(
            statistic=len(a) * len(b) / 2.0, p_value=1.0, significant_at_0_05=False
        )
    result = sps.mannwhitneyu(a, b, alternative="two-sided", method="auto")
    p_value = float(result.pvalue)
    return TestResult(
        statistic=float(result.statistic),
        p_value=p_value,
        significant_at_0_05=p_value <= SIGNIFICANCE_LEVEL,
    )
