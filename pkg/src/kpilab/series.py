"""Uniformly sampled scalar time series and basic transforms.

Sample ``i`` of a series holds the value at time ``t0 + i * ts`` where both
``t0`` and ``ts`` are integer minutes.  All downstream modules (simulation,
detection, classification) exchange series through this container, so the
invariants enforced here (non-empty, finite, uniform grid) hold everywhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

__all__ = [
    "TimeSeries",
    "ScaleParams",
    "RangeScaler",
    "fit_scale_params",
    "min_max_scale",
    "inverse_scale",
    "resample",
    "read_csv",
    "write_csv",
]


@dataclass(frozen=True)
class TimeSeries:
    """Immutable uniformly sampled series.

    Attributes:
        values: 1-d float array, at least one sample, all finite.
        t0: time of the first sample, integer minutes.
        ts: sampling step, integer minutes >= 1.
    """

    values: np.ndarray
    t0: int = 0
    ts: int = 1

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ValueError(f"values must be 1-d, got shape {vals.shape}")
        if vals.size == 0:
            raise ValueError("series must hold at least one sample")
        if not np.all(np.isfinite(vals)):
            raise ValueError("series values must be finite (no NaN/Inf)")
        ts = int(self.ts)
        if ts < 1:
            raise ValueError(f"ts must be a positive integer minute count, got {self.ts}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "t0", int(self.t0))
        object.__setattr__(self, "ts", ts)

    def __len__(self) -> int:
        return int(self.values.size)

    def time_at(self, i: int) -> int:
        """Absolute time (minutes) of sample ``i``."""
        return self.t0 + int(i) * self.ts

    def with_values(self, values: np.ndarray) -> "TimeSeries":
        """Same clock, new values (must keep the length)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ValueError("with_values must preserve the sample count")
        return TimeSeries(values, self.t0, self.ts)

    def slice(self, start: int, stop: int) -> "TimeSeries":
        """Sub-series over ``[start, stop)`` with ``t0`` shifted accordingly."""
        if not 0 <= start < stop <= len(self):
            raise ValueError(f"bad slice [{start}, {stop}) for length {len(self)}")
        return TimeSeries(self.values[start:stop], self.time_at(start), self.ts)


@dataclass(frozen=True)
class ScaleParams:
    """Affine min-max mapping ``[observed_min, observed_max] -> [target_lo, target_hi]``."""

    observed_min: float
    observed_max: float
    target_lo: float = 0.02
    target_hi: float = 1.0

    def __post_init__(self) -> None:
        if not self.observed_max > self.observed_min:
            raise ValueError("observed_max must exceed observed_min")
        if not self.target_hi > self.target_lo:
            raise ValueError("target_hi must exceed target_lo")


def fit_scale_params(x: TimeSeries, target_lo: float = 0.02, target_hi: float = 1.0) -> ScaleParams:
    """Observed range of ``x`` mapped onto the target range.

    Raises ValueError for a constant series (the mapping would be degenerate).
    """
    lo = float(np.min(x.values))
    hi = float(np.max(x.values))
    if hi == lo:
        raise ValueError("cannot fit scale params on a constant series")
    return ScaleParams(lo, hi, float(target_lo), float(target_hi))


def min_max_scale(x: TimeSeries, params: ScaleParams) -> TimeSeries:
    span = params.observed_max - params.observed_min
    width = params.target_hi - params.target_lo
    scaled = (x.values - params.observed_min) / span * width + params.target_lo
    return x.with_values(scaled)


def inverse_scale(x: TimeSeries, params: ScaleParams) -> TimeSeries:
    span = params.observed_max - params.observed_min
    width = params.target_hi - params.target_lo
    raw = (x.values - params.target_lo) / width * span + params.observed_min
    return x.with_values(raw)


class RangeScaler(BaseEstimator):
    """Min-max scaler over :class:`TimeSeries` with fit/transform semantics.

    Fit on the training series, transform any phase-compatible series with the
    stored parameters (train-fit, test-transform).
    """

    def __init__(self, target_lo: float = 0.02, target_hi: float = 1.0):
        self.target_lo = target_lo
        self.target_hi = target_hi

    def fit(self, x: TimeSeries) -> "RangeScaler":
        self.params_ = fit_scale_params(x, self.target_lo, self.target_hi)
        return self

    def transform(self, x: TimeSeries) -> TimeSeries:
        self._check_fitted()
        return min_max_scale(x, self.params_)

    def fit_transform(self, x: TimeSeries) -> TimeSeries:
        return self.fit(x).transform(x)

    def inverse_transform(self, x: TimeSeries) -> TimeSeries:
        self._check_fitted()
        return inverse_scale(x, self.params_)

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("RangeScaler must be fitted before transform")


def resample(x: TimeSeries, ts_new: int) -> TimeSeries:
    """Decimate to a coarser grid by keeping every ``ts_new / ts``-th sample.

    ``ts_new`` must be a positive multiple of ``x.ts``; the first sample is
    always kept so ``t0`` is unchanged.
    """
    ts_new = int(ts_new)
    if ts_new < x.ts or ts_new % x.ts != 0:
        raise ValueError(f"ts_new={ts_new} must be a multiple of ts={x.ts}")
    step = ts_new // x.ts
    return TimeSeries(x.values[::step], x.t0, ts_new)


def write_csv(x: TimeSeries, path, gap_mask: np.ndarray | None = None) -> None:
    """Two-column CSV ``timestamp_minutes,value``; gaps become empty value fields.

    Values are written with shortest round-trip precision, so a read/write
    cycle is lossless.
    """
    if gap_mask is not None:
        gap_mask = np.asarray(gap_mask, dtype=bool)
        if gap_mask.shape != x.values.shape:
            raise ValueError("gap_mask length must match the series")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp_minutes", "value"])
        for i, v in enumerate(x.values):
            if gap_mask is not None and gap_mask[i]:
                writer.writerow([x.time_at(i), ""])
            else:
                writer.writerow([x.time_at(i), repr(float(v))])


def read_csv(path) -> tuple[TimeSeries, np.ndarray]:
    """Read a two-column CSV into a series plus a boolean gap mask.

    Timestamps must be strictly increasing and uniformly spaced; a row with an
    empty value field marks a gap (stored as 0.0 and flagged in the mask).
    """
    times: list[int] = []
    vals: list[float] = []
    mask: list[bool] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                t = int(row[0])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from exc
            times.append(t)
            if row[1].strip() == "":
                vals.append(0.0)
                mask.append(True)
            else:
                vals.append(float(row[1]))
                mask.append(False)
    if not times:
        raise ValueError(f"{path}: no data rows")
    t_arr = np.asarray(times, dtype=np.int64)
    if len(t_arr) > 1:
        diffs = np.diff(t_arr)
        if np.any(diffs <= 0):
            raise ValueError(f"{path}: timestamps must be strictly increasing")
        if np.any(diffs != diffs[0]):
            raise ValueError(f"{path}: timestamps must be uniformly spaced")
        ts = int(diffs[0])
    else:
        ts = 1
    return TimeSeries(np.asarray(vals), int(t_arr[0]), ts), np.asarray(mask, dtype=bool)
