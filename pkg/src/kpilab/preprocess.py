"""Series preparation: noise estimation, gap cleaning, decomposition.

The noise estimator isolates the high-frequency band with a zero-phase
Butterworth filter; the decomposition is the classic moving-average split into
trend, seasonal and residual parts used to deseasonalize detector output
before classification.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .series import TimeSeries

__all__ = [
    "estimate_noise_level",
    "SeriesRejectedError",
    "CleanReport",
    "clean_gaps",
    "Decomposition",
    "decompose",
    "deseasonalize_test",
    "WEEK_MINUTES",
    "DAY_MINUTES",
]

WEEK_MINUTES = 10080
DAY_MINUTES = 1440

# High-pass design: order 5, cutoff at 1/8 of the sampling frequency, i.e.
# 1/4 of Nyquist regardless of the sampling step.
_FILTER_ORDER = 5
_CUTOFF_NYQUIST_FRACTION = 0.25
_MIN_NOISE_SAMPLES = 50

MAX_MISSING_FRACTION = 0.10
_MAX_PHASE_DONORS = 3


def estimate_noise_level(x: TimeSeries) -> float:
    """Noise level as the std of the high-pass filtered series.

    A 5th-order Butterworth high-pass with cutoff at a quarter of Nyquist is
    applied forward-backward (zero phase), and the sample standard deviation
    (ddof=1) of the filtered signal is returned.  Needs at least 50 samples.
    """
    if len(x) < _MIN_NOISE_SAMPLES:
        raise ValueError(f"need at least {_MIN_NOISE_SAMPLES} samples, got {len(x)}")
    b, a = signal.butter(_FILTER_ORDER, _CUTOFF_NYQUIST_FRACTION, btype="highpass")
    filtered = signal.filtfilt(b, a, x.values)
    return float(np.std(filtered, ddof=1))


class SeriesRejectedError(ValueError):
    """Raised when a series misses too much data to be repaired."""

    def __init__(self, missing_fraction: float, max_fraction: float):
        self.missing_fraction = missing_fraction
        self.max_fraction = max_fraction
        super().__init__(
            f"missing fraction {missing_fraction:.4f} exceeds the {max_fraction:.2f} limit"
        )


@dataclass
class CleanReport:
    n_missing: int
    missing_fraction: float
    n_phase_filled: int
    n_median_filled: int
    median_filled_indices: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_missing": self.n_missing,
            "missing_fraction": self.missing_fraction,
            "n_phase_filled": self.n_phase_filled,
            "n_median_filled": self.n_median_filled,
            "median_filled_indices": list(self.median_filled_indices),
        }


def clean_gaps(
    x: TimeSeries,
    gap_mask: np.ndarray,
    max_missing: float = MAX_MISSING_FRACTION,
) -> tuple[TimeSeries, CleanReport]:
    """Fill gaps with same-weekly-phase means, or reject the series.

    Each missing sample takes the mean of up to 3 valid samples one or more
    whole weeks away (nearest occurrences first).  If no same-phase donor
    exists the series median fills in and the index is flagged in the report.
    Raises :class:`SeriesRejectedError` when more than ``max_missing`` of the
    samples are gaps.
    """
    gap_mask = np.asarray(gap_mask, dtype=bool)
    if gap_mask.shape != x.values.shape:
        raise ValueError("gap_mask length must match the series")
    if WEEK_MINUTES % x.ts != 0:
        raise ValueError(f"ts={x.ts} must divide a week")
    n = len(x)
    n_missing = int(gap_mask.sum())
    fraction = n_missing / n
    if fraction > max_missing:
        raise SeriesRejectedError(fraction, max_missing)

    week = WEEK_MINUTES // x.ts
    vals = x.values.copy()
    valid = ~gap_mask
    median = float(np.median(x.values[valid])) if valid.any() else 0.0
    n_phase = 0
    median_indices: list[int] = []
    max_k = n // week + 1
    for i in np.flatnonzero(gap_mask):
        donors = []
        # same weekly phase, nearest weeks first, earlier week on ties
        for k in range(1, max_k + 1):
            for j in (i - k * week, i + k * week):
                if 0 <= j < n and valid[j]:
                    donors.append(vals[j])
                    if len(donors) == _MAX_PHASE_DONORS:
                        break
            if len(donors) == _MAX_PHASE_DONORS:
                break
        if donors:
            vals[i] = float(np.mean(donors))
            n_phase += 1
        else:
            vals[i] = median
            median_indices.append(int(i))
    report = CleanReport(n_missing, fraction, n_phase, len(median_indices), median_indices)
    return x.with_values(vals), report


@dataclass(frozen=True)
class Decomposition:
    """Additive split x = trend + seasonal + resid on a common clock."""

    trend: TimeSeries
    seasonal: TimeSeries
    resid: TimeSeries
    period: int


def _moving_average_trend(values: np.ndarray, period: int) -> np.ndarray:
    """Centered moving average; even periods use half-weights at both ends.

    The average is undefined within period/2 of the edges, where the nearest
    defined value is held instead.
    """
    n = values.size
    if period % 2 == 0:
        kernel = np.ones(period + 1) / period
        kernel[0] = kernel[-1] = 0.5 / period
    else:
        kernel = np.ones(period) / period
    core = np.convolve(values, kernel, mode="valid")
    half = period // 2
    out = np.empty(n)
    out[half : half + core.size] = core
    out[:half] = core[0]
    out[half + core.size :] = core[-1]
    return out


def decompose(x: TimeSeries, period: int) -> Decomposition:
    """Moving-average trend, mean-centered per-phase seasonal, residual.

    The phase of sample ``i`` is ``i % period``; the series must span at least
    two full periods.
    """
    period = int(period)
    if period < 2:
        raise ValueError("period must be >= 2 samples")
    n = len(x)
    if n < 2 * period:
        raise ValueError(f"need at least {2 * period} samples for period {period}, got {n}")
    trend = _moving_average_trend(x.values, period)
    detrended = x.values - trend
    phases = np.arange(n) % period
    seasonal_one = np.array([detrended[phases == p].mean() for p in range(period)])
    seasonal_one -= seasonal_one.mean()
    seasonal = seasonal_one[phases]
    resid = x.values - trend - seasonal
    return Decomposition(
        trend=x.with_values(trend),
        seasonal=x.with_values(seasonal),
        resid=x.with_values(resid),
        period=period,
    )


def deseasonalize_test(train: TimeSeries, test: TimeSeries, period: int) -> TimeSeries:
    """Remove train-tail seasonality and trend level from a test series.

    The seasonal profile comes from the last two periods of the training
    series and the trend level is the mean trend over its last period.  The
    test series must share the sampling step and sit on the same phase grid
    (its ``t0`` offset from the train start must be a whole number of steps).
    """
    period = int(period)
    if test.ts != train.ts:
        raise ValueError("train and test must share the sampling step")
    offset_minutes = test.t0 - train.t0
    if offset_minutes % train.ts != 0:
        raise ValueError("test is phase-misaligned with train")
    n = len(train)
    if n < 2 * period:
        raise ValueError(f"train must span at least two periods ({2 * period} samples)")

    tail_start = n - 2 * period
    tail = train.slice(tail_start, n)
    parts = decompose(tail, period)
    seasonal_profile = parts.seasonal.values[:period]  # phase p = tail index p
    trend_level = float(parts.trend.values[period:].mean())

    offset = offset_minutes // train.ts
    g = offset + np.arange(len(test))  # positions in train-index space
    season = seasonal_profile[(g - tail_start) % period]
    return test.with_values(test.values - season - trend_level)
