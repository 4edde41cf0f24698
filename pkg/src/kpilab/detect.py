"""Forecast-residual anomaly detection over expanding folds.

A seasonal forecaster predicts each fold's test span from its train span; any
sample whose absolute deviation from the forecast exceeds the tolerance delta
is flagged, and fixed-size analysis windows are cut around runs of flagged
samples.  Detection quality is scored by window/record overlap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .preprocess import DAY_MINUTES, WEEK_MINUTES, deseasonalize_test
from .series import TimeSeries
from .simulate import AnomalyRecord
from .windows import AnalysisWindow

__all__ = [
    "ForecastResult",
    "SeasonalNaiveForecaster",
    "expanding_splits",
    "flag_points",
    "make_windows",
    "DetectionScore",
    "score_detection",
    "detect_pipeline",
]

DEFAULT_HALF_WINDOW = 24  # at ts=5 this is two hours of context per side
MIN_TRAIN_DAYS = 8


@dataclass(frozen=True)
class ForecastResult:
    """Point forecast plus per-sample tolerance."""

    predicted: TimeSeries
    delta: np.ndarray

    def __post_init__(self) -> None:
        delta = np.asarray(self.delta, dtype=float)
        if delta.shape != self.predicted.values.shape:
            raise ValueError("delta must have one entry per predicted sample")
        if np.any(delta < 0):
            raise ValueError("delta must be non-negative")
        object.__setattr__(self, "delta", delta)


class SeasonalNaiveForecaster(BaseEstimator):
    """Seasonal template forecaster with a confidence-interval tolerance.

    The training series is folded into whole periods.  ``template="median"``
    forecasts the per-phase median over all periods, which ignores anomalous
    training samples but needs three periods to vote one down, so it uses the
    weekly period only when three whole weeks exist and falls back to the
    daily period otherwise; ``template="last"`` repeats the most recent period
    verbatim (weekly when one whole week exists).  Either way the template is
    shifted so its mean matches the last period (the mean-trend adjustment).

    The tolerance is ``z`` times the in-train residual standard deviation,
    resolved per point by time of day: residual scale tracks the daily profile
    (the signal is multiplicative), so one global deviation under-covers the
    daily peaks.  Per-point values pool residuals over a +-6-sample phase
    neighbourhood to keep the estimates stable on short trains.
    """

    _SMOOTH_HALF = 6  # +-30 min at ts=5
    _MIN_PERIODS = {"median": 3, "last": 1}

    def __init__(self, template: str = "median", z: float = 1.96):
        self.template = template
        self.z = z

    def fit(self, train: TimeSeries) -> "SeasonalNaiveForecaster":
        if self.template not in self._MIN_PERIODS:
            raise ValueError(f"unknown template mode {self.template!r}")
        n = len(train)
        day = DAY_MINUTES // train.ts
        week = WEEK_MINUTES // train.ts
        if WEEK_MINUTES % train.ts != 0:
            raise ValueError(f"ts={train.ts} must divide a week")
        if train.t0 % train.ts != 0:
            raise ValueError("train start time must sit on the sample grid")
        if n < day:
            raise ValueError("train must span at least one day")
        period = week if n // week >= self._MIN_PERIODS[self.template] else day
        k = n // period
        tail = train.values[n - k * period :].reshape(k, period)
        if self.template == "median":
            template = np.median(tail, axis=0)
        else:
            template = tail[-1].copy()
        # mean-trend adjustment: pin the template level to the last period
        template += float(tail[-1].mean() - template.mean())

        # In-train residuals against the phase-aligned template.  The last
        # period is excluded: under template="last" it matches exactly and
        # would deflate the estimate.  A "last" template is itself one noisy
        # draw, so the residual variance doubles; divide by sqrt(2) to recover
        # the per-sample noise scale.
        phases = (np.arange(n) - (n - k * period)) % period
        resid = train.values[: n - period] - template[phases[: n - period]]
        offset0 = (train.t0 // train.ts) % day
        if resid.size >= 2:
            sigma = float(np.std(resid, ddof=1))
            day_phases = (offset0 + np.arange(resid.size)) % day
            sigma_day = self._phase_sigma(resid, day_phases, day)
        else:
            sigma = 0.0
            sigma_day = np.zeros(day)
        if self.template == "last":
            sigma /= math.sqrt(2.0)
            sigma_day = sigma_day / math.sqrt(2.0)

        self.period_ = int(period)
        self.template_ = template
        self.sigma_resid_ = sigma
        self.sigma_day_ = sigma_day
        self.train_end_ = train.time_at(n - 1) + train.ts
        self.ts_ = train.ts
        self._day = day
        self._end_phase = (offset0 + n) % day
        return self

    @staticmethod
    def _phase_sigma(resid: np.ndarray, day_phases: np.ndarray, day: int) -> np.ndarray:
        """Root mean square of residuals near each time-of-day phase.

        Uncentred on purpose: any per-phase bias should widen the tolerance,
        not hide inside a subtracted mean.
        """
        sq = np.zeros(day)
        cnt = np.zeros(day)
        np.add.at(sq, day_phases, resid**2)
        np.add.at(cnt, day_phases, 1.0)
        h = SeasonalNaiveForecaster._SMOOTH_HALF
        kernel = np.ones(2 * h + 1)
        sq = np.convolve(np.r_[sq[-h:], sq, sq[:h]], kernel, mode="valid")
        cnt = np.convolve(np.r_[cnt[-h:], cnt, cnt[:h]], kernel, mode="valid")
        out = np.zeros(day)
        np.divide(sq, cnt, out=out, where=cnt > 0)
        return np.sqrt(out)

    def predict(self, horizon: int | None = None) -> ForecastResult:
        """Forecast ``horizon`` samples past the train end (default one period)."""
        if not hasattr(self, "template_"):
            raise NotFittedError("forecaster must be fitted before predict")
        if horizon is None:
            horizon = self.period_
        horizon = int(horizon)
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        values = self.template_[np.arange(horizon) % self.period_]
        predicted = TimeSeries(values, self.train_end_, self.ts_)
        delta = self.z * self.sigma_day_[(self._end_phase + np.arange(horizon)) % self._day]
        return ForecastResult(predicted, delta)


def expanding_splits(
    n: int,
    ts: int,
    folds: int = 10,
    train_frac: float = 0.7,
    min_train_days: int = MIN_TRAIN_DAYS,
) -> list[tuple[range, range]]:
    """Expanding-window folds: fold k covers the first ceil(n*k/folds) samples,
    split 70/30 into train and test.

    Folds whose train part is shorter than ``min_train_days`` (or whose test
    part is empty) are dropped with a warning; at least one fold must survive.
    """
    if folds < 1:
        raise ValueError("folds must be >= 1")
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must be in (0, 1)")
    min_train = min_train_days * DAY_MINUTES // ts
    splits = []
    last_test_start = -1
    for k in range(1, folds + 1):
        p = math.ceil(n * k / folds)
        t_end = int(train_frac * p)
        if t_end < min_train or p - t_end < 1:
            continue
        if t_end <= last_test_start:
            continue
        splits.append((range(0, t_end), range(t_end, p)))
        last_test_start = t_end
    if not splits:
        raise ValueError(
            f"series of {n} samples cannot provide any fold with >= {min_train_days} train days"
        )
    if len(splits) < folds:
        warnings.warn(
            f"only {len(splits)} of {folds} folds have enough training data",
            stacklevel=2,
        )
    return splits


def flag_points(test: TimeSeries, forecast: ForecastResult) -> np.ndarray:
    """Boolean anomaly states: strict |actual - predicted| > delta."""
    if len(test) != len(forecast.predicted):
        raise ValueError("test and forecast must have the same length")
    return np.abs(test.values - forecast.predicted.values) > forecast.delta


def make_windows(
    x: TimeSeries,
    states: np.ndarray,
    m: int = DEFAULT_HALF_WINDOW,
    series_id: str = "series",
    fold: int = 0,
    raw: TimeSeries | None = None,
    index_offset: int = 0,
) -> list[AnalysisWindow]:
    """One window of 2m samples per run of consecutive flagged samples.

    Scanning left to right, a flagged sample at i emits the cutout
    ``x[i - m, i + m)`` and the scan resumes past the whole flagged run, so a
    contiguous run yields a single window.  Cutouts that overhang the series
    are padded by edge replication and marked.  ``index_offset`` shifts the
    stored global indices (fold test spans start mid-series).
    """
    states = np.asarray(states, dtype=bool)
    if states.shape != x.values.shape:
        raise ValueError("states must mark every sample of x")
    if m < 1:
        raise ValueError("m must be >= 1")
    n = len(x)
    out = []
    i = 0
    while i < n:
        if not states[i]:
            i += 1
            continue
        run = 1
        while i + run < n and states[i + run]:
            run += 1
        lo, hi = i - m, i + m
        values = _padded_cutout(x.values, lo, hi)
        raw_values = _padded_cutout(raw.values, lo, hi) if raw is not None else None
        out.append(
            AnalysisWindow(
                values=values,
                source_index=i + index_offset,
                start=lo + index_offset,
                series_id=series_id,
                fold=fold,
                padded=lo < 0 or hi > n,
                raw_values=raw_values,
            )
        )
        i += run
    return out


def _padded_cutout(values: np.ndarray, lo: int, hi: int) -> np.ndarray:
    n = values.size
    core = values[max(lo, 0) : min(hi, n)]
    pad_front = max(0, -lo)
    pad_back = max(0, hi - n)
    if pad_front or pad_back:
        return np.pad(core, (pad_front, pad_back), mode="edge")
    return core.copy()


@dataclass(frozen=True)
class DetectionScore:
    tp: int
    fp: int
    fn: int

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2.0 * self.tp / denom if denom else 0.0

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "f1": self.f1}


def score_detection(records: list[AnomalyRecord], windows: list[AnalysisWindow]) -> DetectionScore:
    """Window/record overlap score.

    A record is a true positive when at least one window intersects its
    anomalous span; windows touching no record are false positives.
    """
    covered = [False] * len(records)
    fp = 0
    for w in windows:
        hit = False
        for idx, rec in enumerate(records):
            lo, hi = rec.span
            if w.start <= hi and lo < w.end:
                covered[idx] = True
                hit = True
        if not hit:
            fp += 1
    tp = sum(covered)
    return DetectionScore(tp=tp, fp=fp, fn=len(records) - tp)


def detect_pipeline(
    x: TimeSeries,
    forecaster: SeasonalNaiveForecaster | None = None,
    m: int = DEFAULT_HALF_WINDOW,
    folds: int = 10,
    records: list[AnomalyRecord] | None = None,
    series_id: str = "series",
    deseasonalize: bool = True,
) -> tuple[list[AnalysisWindow], DetectionScore | None]:
    """Detect anomalies over expanding folds and cut analysis windows.

    Each fold fits the forecaster on its train span and applies it across the
    test span one period at a time, refitting on everything observed before
    each predicted chunk.  The rolling origin keeps the forecast anchored to
    the local level over long test spans (a template pinned at the train end
    drifts against multi-week structure) and stays causal: no sample is ever
    predicted from data at or after its own position.

    When ``deseasonalize`` is on, the train-tail seasonality and trend level
    are removed from both the test samples and the forecast before windows are
    cut, so window values live on the residual scale (flag decisions are
    unaffected: the same profile is subtracted from both sides).  Returns all
    windows (global indices) plus a score when ground-truth records are
    supplied.
    """
    if forecaster is None:
        forecaster = SeasonalNaiveForecaster()
    week = WEEK_MINUTES // x.ts
    day = DAY_MINUTES // x.ts
    windows: list[AnalysisWindow] = []
    for fold_no, (train_rng, test_rng) in enumerate(expanding_splits(len(x), x.ts, folds)):
        train = x.slice(train_rng.start, train_rng.stop)
        test = x.slice(test_rng.start, test_rng.stop)
        fc = _walk_forecast(x, forecaster, test_rng.start, test_rng.stop)

        if deseasonalize:
            period = _deseason_period(len(train), week, day)
        else:
            period = None
        if period is not None:
            resid_test = deseasonalize_test(train, test, period)
            resid_fc = deseasonalize_test(train, fc.predicted, period)
        else:
            resid_test, resid_fc = test, fc.predicted

        states = flag_points(resid_test, ForecastResult(resid_fc, fc.delta))
        windows.extend(
            make_windows(
                resid_test,
                states,
                m=m,
                series_id=series_id,
                fold=fold_no,
                raw=test,
                index_offset=test_rng.start,
            )
        )
    score = score_detection(records, windows) if records is not None else None
    return windows, score


def _walk_forecast(
    x: TimeSeries, forecaster: SeasonalNaiveForecaster, start: int, stop: int
) -> ForecastResult:
    """Apply the forecaster over x[start:stop] with a rolling one-period origin."""
    preds: list[np.ndarray] = []
    deltas: list[np.ndarray] = []
    pos = start
    while pos < stop:
        forecaster.fit(x.slice(0, pos))
        chunk = min(forecaster.period_, stop - pos)
        result = forecaster.predict(chunk)
        preds.append(result.predicted.values)
        deltas.append(result.delta)
        pos += chunk
    predicted = TimeSeries(np.concatenate(preds), x.time_at(start), x.ts)
    return ForecastResult(predicted, np.concatenate(deltas))


def _deseason_period(train_len: int, week: int, day: int) -> int | None:
    """Longest supported period the train span can estimate (2 full periods)."""
    if train_len >= 2 * week:
        return week
    if train_len >= 2 * day:
        return day
    return None
