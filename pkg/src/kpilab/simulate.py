"""Synthetic KPI series with labeled anomaly injection.

The base signal is a product of three sinusoids (daily, weekly and monthly
periods) whose amplitude/mean pairs each sum to one, keeping the clean signal
inside [0, 1].  Anomalies of four classes are injected into contiguous,
non-overlapping windows, the series is min-max scaled to [0.02, 1], and
multiplicative, clipped Gaussian noise is added last, so the configured noise
level is expressed in post-scaling units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .series import TimeSeries, fit_scale_params, min_max_scale

__all__ = [
    "ANOMALY_CLASSES",
    "SUBCLASSES",
    "BALANCED_PROPORTIONS",
    "IMBALANCED_PROPORTIONS",
    "BaseSignalParams",
    "DEFAULT_SIGNAL",
    "AnomalyRecord",
    "SimConfig",
    "base_signal",
    "plan_windows",
    "daily_amplitude",
    "inject",
    "add_noise",
    "simulate",
]

ANOMALY_CLASSES = ("single_point", "temporary_change", "level_shift", "variation_change")

# Subclass = class plus direction; additive classes use peak/dip naming for the
# single point and growth/decrease for the span-based ones.
SUBCLASSES = (
    "single_point_peak",
    "single_point_dip",
    "temporary_change_growth",
    "temporary_change_decrease",
    "level_shift_growth",
    "level_shift_decrease",
    "variation_change_growth",
    "variation_change_decrease",
)

BALANCED_PROPORTIONS = {name: 1.0 / len(SUBCLASSES) for name in SUBCLASSES}

# Production-like mix: mostly short additive anomalies, level shifts rare.
IMBALANCED_PROPORTIONS = {
    "single_point_peak": 0.43,
    "single_point_dip": 0.02,
    "temporary_change_growth": 0.38,
    "temporary_change_decrease": 0.02,
    "level_shift_growth": 0.005,
    "level_shift_decrease": 0.005,
    "variation_change_growth": 0.1,
    "variation_change_decrease": 0.04,
}

# Half-window size Y is drawn uniformly (in samples) from these per-class
# ranges; an anomaly window spans 2*Y samples.
HALF_WINDOW_RANGES = {
    "single_point": (120, 480),
    "temporary_change": (240, 960),
    "level_shift": (1440, 2160),
    "variation_change": (1440, 2160),
}

# Margin kept free at the end of every window, and the shortest admissible
# anomalous span per class (a piecewise-linear hat needs >= 3 samples so its
# four breakpoints stay distinct).
EDGE_MARGIN = 5
MIN_SPAN = {
    "single_point": 1,
    "temporary_change": 3,
    "level_shift": 3,
    "variation_change": 3,
}

STRENGTH_RANGE = (0.5, 0.7)

# Noise: W ~ N(0, noise_scale) with noise_scale = NOISE_STD_FACTOR * sigma,
# clipped to +/- CLIP_SIGMAS * noise_scale, multiplied by the clean signal.
# The 2.31 factor calibrates the configured sigma against the high-pass noise
# estimator in kpilab.preprocess.
NOISE_STD_FACTOR = 2.31
CLIP_SIGMAS = 4.0

_PLAN_RETRIES = 100


def _class_of(subclass: str) -> str:
    for cls in ANOMALY_CLASSES:
        if subclass.startswith(cls + "_"):
            return cls
    raise ValueError(f"unknown anomaly subclass {subclass!r}")


def _direction_of(subclass: str) -> str:
    return subclass[len(_class_of(subclass)) + 1 :]


@dataclass(frozen=True)
class BaseSignalParams:
    """Product-of-sinusoids base signal.

    Each component contributes ``A * sin(2*pi*t / T) + mu`` with ``A + mu = 1``
    so the product stays in [0, 1] for every t.
    """

    amplitudes: tuple[float, ...] = (0.5, 0.1, 0.05)
    periods: tuple[float, ...] = (1440.0, 10080.0, 40320.0)
    means: tuple[float, ...] = (0.5, 0.9, 0.95)

    def __post_init__(self) -> None:
        if not len(self.amplitudes) == len(self.periods) == len(self.means):
            raise ValueError("component tuples must have equal length")
        for a, mu in zip(self.amplitudes, self.means):
            if abs(a + mu - 1.0) > 1e-12:
                raise ValueError(f"amplitude {a} and mean {mu} must sum to 1")
        if any(t <= 0 for t in self.periods):
            raise ValueError("periods must be positive")


DEFAULT_SIGNAL = BaseSignalParams()


def base_signal(t, params: BaseSignalParams = DEFAULT_SIGNAL):
    """Clean signal value(s) at time ``t`` (minutes); accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    for a, period, mu in zip(params.amplitudes, params.periods, params.means):
        out = out * (a * np.sin(2.0 * np.pi * t / period) + mu)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class AnomalyRecord:
    """Ground truth for one injected anomaly.

    ``i_w`` is the first index of the anomaly's window, ``i_a`` the first
    anomalous index and ``length`` the anomalous span, so indices
    ``[i_a, i_a + length]`` (inclusive) are affected.  ``breakpoints`` holds
    the hat-shape knees (i_b, i_c) and ``alphas`` the knee offsets, both only
    for span anomalies that use them.
    """

    subclass: str
    i_w: int
    window_len: int
    i_a: int
    length: int
    alpha: float | None = None
    breakpoints: tuple[int, int] | None = None
    alphas: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.subclass not in SUBCLASSES:
            raise ValueError(f"unknown anomaly subclass {self.subclass!r}")
        if self.window_len < 1 or self.length < 1:
            raise ValueError("window_len and length must be >= 1")
        if not self.i_w <= self.i_a:
            raise ValueError("anomaly must start inside its window")
        if self.i_a + self.length > self.i_w + self.window_len - EDGE_MARGIN:
            raise ValueError("anomalous span must end at least EDGE_MARGIN before the window end")
        if self.anomaly_class == "single_point" and self.length != 1:
            raise ValueError("single point anomalies have length 1")
        if self.breakpoints is not None:
            i_b, i_c = self.breakpoints
            if not self.i_a < i_b < i_c < self.i_a + self.length:
                raise ValueError("breakpoints must satisfy i_a < i_b < i_c < i_a + length")

    @property
    def anomaly_class(self) -> str:
        return _class_of(self.subclass)

    @property
    def direction(self) -> str:
        return _direction_of(self.subclass)

    @property
    def sign(self) -> float:
        return 1.0 if self.direction in ("peak", "growth") else -1.0

    @property
    def span(self) -> tuple[int, int]:
        """Inclusive index range of affected samples."""
        return (self.i_a, self.i_a + self.length)

    def to_dict(self) -> dict:
        return {
            "subclass": self.subclass,
            "i_w": self.i_w,
            "window_len": self.window_len,
            "i_a": self.i_a,
            "length": self.length,
            "alpha": self.alpha,
            "breakpoints": list(self.breakpoints) if self.breakpoints else None,
            "alphas": list(self.alphas) if self.alphas else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnomalyRecord":
        return cls(
            subclass=d["subclass"],
            i_w=int(d["i_w"]),
            window_len=int(d["window_len"]),
            i_a=int(d["i_a"]),
            length=int(d["length"]),
            alpha=None if d.get("alpha") is None else float(d["alpha"]),
            breakpoints=None if d.get("breakpoints") is None else tuple(int(v) for v in d["breakpoints"]),
            alphas=None if d.get("alphas") is None else tuple(float(v) for v in d["alphas"]),
        )


@dataclass(frozen=True)
class SimConfig:
    """Simulation request: ``n`` anomalies at sampling step ``ts`` minutes."""

    n: int
    ts: int = 5
    noise_sigma: float = 0.0
    proportions: dict = field(default_factory=lambda: dict(BALANCED_PROPORTIONS))
    strength_range: tuple[float, float] = STRENGTH_RANGE
    seed: int | None = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.ts < 1 or 1440 % self.ts != 0:
            raise ValueError(f"ts={self.ts} must be a positive divisor of 1440 minutes")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        unknown = set(self.proportions) - set(SUBCLASSES)
        if unknown:
            raise ValueError(f"unknown subclasses in proportions: {sorted(unknown)}")
        probs = self._prob_vector()
        if np.any(probs < 0):
            raise ValueError("proportions must be non-negative")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError("proportions must sum to 1")
        lo, hi = self.strength_range
        if not 0 < lo <= hi:
            raise ValueError("strength_range must satisfy 0 < lo <= hi")

    def _prob_vector(self) -> np.ndarray:
        return np.asarray([float(self.proportions.get(name, 0.0)) for name in SUBCLASSES])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "ts": self.ts,
            "noise_sigma": self.noise_sigma,
            "proportions": {k: self.proportions[k] for k in SUBCLASSES if k in self.proportions},
            "strength_range": list(self.strength_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        props = d.get("proportions", "balanced")
        if props == "balanced":
            props = dict(BALANCED_PROPORTIONS)
        elif props == "imbalanced":
            props = dict(IMBALANCED_PROPORTIONS)
        return cls(
            n=int(d["n"]),
            ts=int(d.get("ts", 5)),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            proportions=dict(props),
            strength_range=tuple(d.get("strength_range", STRENGTH_RANGE)),
            seed=d.get("seed", 0),
        )


def plan_windows(cfg: SimConfig, rng: np.random.Generator | None = None) -> list[AnomalyRecord]:
    """Draw subclasses and lay out contiguous anomaly windows.

    For each anomaly the half-window Y is drawn uniformly from the class range,
    the window spans 2*Y samples starting where the previous one ended, the
    anomaly start i_a is uniform over the window minus the edge margin and the
    minimal span, and the span length comes from a uniform end-index draw
    floored at the class minimum.  Single points always have length 1.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    probs = cfg._prob_vector()
    records = []
    offset = 0
    for _ in range(cfg.n):
        subclass = SUBCLASSES[int(rng.choice(len(SUBCLASSES), p=probs))]
        cls = _class_of(subclass)
        lo, hi = HALF_WINDOW_RANGES[cls]
        min_span = MIN_SPAN[cls]
        for attempt in range(_PLAN_RETRIES):
            half = int(rng.integers(lo, hi, endpoint=True))
            window_len = 2 * half
            if window_len >= EDGE_MARGIN + min_span + 1:
                break
        else:
            raise ValueError(f"could not draw a window large enough for {subclass}")
        i_w = offset
        last_start = i_w + window_len - EDGE_MARGIN - min_span
        i_a = int(rng.integers(i_w, last_start, endpoint=True))
        if cls == "single_point":
            length = 1
        else:
            i_e = int(rng.integers(i_a, i_w + window_len - EDGE_MARGIN, endpoint=True))
            length = max(i_e - i_a, min_span)
        records.append(AnomalyRecord(subclass, i_w, window_len, i_a, length))
        offset += window_len
    return records


def daily_amplitude(x: TimeSeries, i: int) -> float:
    """Max minus min of ``x`` over the calendar day containing sample ``i``.

    Days are aligned to t = 0, so with ``t0 = 0`` day boundaries fall on index
    multiples of ``1440 / ts``.  The series must cover the whole day.
    """
    if 1440 % x.ts != 0:
        raise ValueError(f"ts={x.ts} must divide a day")
    if not 0 <= i < len(x):
        raise ValueError(f"index {i} outside the series")
    day = x.time_at(int(i)) // 1440
    # first/last sample indices whose timestamps fall inside [day*1440, (day+1)*1440)
    start = math.ceil((day * 1440 - x.t0) / x.ts)
    stop = math.ceil(((day + 1) * 1440 - x.t0) / x.ts)
    per_day = 1440 // x.ts
    if start < 0 or stop > len(x) or stop - start != per_day:
        raise ValueError("series does not cover the full day containing the index")
    segment = x.values[start:stop]
    return float(np.max(segment) - np.min(segment))


def _hat_offsets(rec: AnomalyRecord, alpha1: float, alpha2: float) -> np.ndarray:
    """Piecewise-linear offsets over the inclusive span of a hat anomaly.

    The hat runs (i_a, 0) -> (i_b, alpha1) -> (i_c, alpha2) -> (i_a+length, 0)
    with exact linear interpolation between breakpoints.
    """
    if rec.breakpoints is None:
        raise ValueError("hat anomalies need breakpoints (i_b, i_c)")
    i_b, i_c = rec.breakpoints
    i_end = rec.i_a + rec.length
    out = np.empty(rec.length + 1)
    segments = ((rec.i_a, i_b, 0.0, alpha1), (i_b, i_c, alpha1, alpha2), (i_c, i_end, alpha2, 0.0))
    for x0, x1, y0, y1 in segments:
        k = np.arange(x1 - x0 + 1, dtype=float)
        # k = 0 yields y0 exactly; later segments overwrite the shared node, so
        # every breakpoint carries its knee value with no rounding
        out[x0 - rec.i_a : x1 - rec.i_a + 1] = y0 + k * (y1 - y0) / (x1 - x0)
    out[-1] = 0.0
    return out


def draw_hat_params(rec: AnomalyRecord, rng: np.random.Generator) -> AnomalyRecord:
    """Fill in breakpoints (and knee offsets for temporary changes).

    i_b is uniform over the first half of the span and i_c over (i_b, end);
    both are kept strictly interior so the hat is zero at its endpoints and
    hits alpha1/alpha2 exactly at the knees.  For a temporary change one knee
    gets the full strength alpha and the other a uniform draw from
    [min(0.4, alpha), alpha], the side chosen by a fair coin; a level shift
    pins both knees at alpha (a flat plateau) and consumes no extra draws.
    """
    if rec.alpha is None:
        raise ValueError("record strength alpha must be drawn before hat parameters")
    i_b = int(rng.integers(rec.i_a + 1, rec.i_a + rec.length // 2, endpoint=True))
    i_c = int(rng.integers(i_b + 1, rec.i_a + rec.length - 1, endpoint=True))
    rec = replace(rec, breakpoints=(i_b, i_c))
    if rec.anomaly_class == "temporary_change":
        other = float(rng.uniform(min(0.4, rec.alpha), rec.alpha))
        if rng.random() < 0.5:
            alphas = (rec.alpha, other)
        else:
            alphas = (other, rec.alpha)
        rec = replace(rec, alphas=alphas)
    elif rec.anomaly_class == "level_shift":
        rec = replace(rec, alphas=(rec.alpha, rec.alpha))
    return rec


def inject(x: TimeSeries, rec: AnomalyRecord, rng: np.random.Generator | None = None) -> TimeSeries:
    """Apply one anomaly to a copy of ``x``.

    The record must carry its strength ``alpha``; hat parameters are drawn via
    ``rng`` when missing.  Only samples inside the record span change.
    """
    if rec.alpha is None:
        raise ValueError("record strength alpha must be set before injection")
    if rec.i_a + rec.length >= len(x):
        raise ValueError("anomalous span exceeds the series")
    cls = rec.anomaly_class
    if cls in ("temporary_change", "level_shift") and rec.breakpoints is None:
        if rng is None:
            raise ValueError("hat parameters missing and no rng provided to draw them")
        rec = draw_hat_params(rec, rng)

    vals = x.values.copy()
    if cls == "single_point":
        vals[rec.i_a] += rec.sign * rec.alpha
    elif cls in ("temporary_change", "level_shift"):
        a1, a2 = rec.alphas if rec.alphas is not None else (rec.alpha, rec.alpha)
        offsets = _hat_offsets(rec, a1, a2)
        vals[rec.i_a : rec.i_a + rec.length + 1] += rec.sign * offsets
    elif cls == "variation_change":
        seg = slice(rec.i_a, rec.i_a + rec.length + 1)
        vals[seg] += rec.sign * vals[seg] * rec.alpha
    else:  # pragma: no cover - subclass names are validated upstream
        raise ValueError(f"unknown anomaly class {cls!r}")
    return x.with_values(vals)


def add_noise(
    x_tilde: TimeSeries,
    x_base: TimeSeries,
    records: list[AnomalyRecord],
    sigma: float,
    rng: np.random.Generator,
) -> TimeSeries:
    """Multiplicative clipped Gaussian noise, scaled by the clean signal.

    noise(i) = x_base(i) * clip(W, +/-4*noise_scale) with W ~ N(0, noise_scale)
    and noise_scale = 2.31 * sigma.  Samples inside the spans of single point
    and temporary change records stay noise-free so those shapes survive
    verbatim.  sigma = 0 returns the input unchanged.
    """
    if len(x_tilde) != len(x_base):
        raise ValueError("x_tilde and x_base must have the same length")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return x_tilde
    noise_scale = NOISE_STD_FACTOR * float(sigma)
    w = rng.normal(0.0, noise_scale, size=len(x_tilde))
    np.clip(w, -CLIP_SIGMAS * noise_scale, CLIP_SIGMAS * noise_scale, out=w)
    noise = x_base.values * w
    for rec in records:
        if rec.anomaly_class in ("single_point", "temporary_change"):
            lo, hi = rec.span
            noise[lo : hi + 1] = 0.0
    return x_tilde.with_values(x_tilde.values + noise)


def simulate(cfg: SimConfig) -> tuple[TimeSeries, list[AnomalyRecord]]:
    """Full pipeline: plan windows, inject, scale to [0.02, 1], add noise.

    Returns the final series (t0 = 0) and the completed anomaly records.  One
    seeded generator drives every draw, so equal configs give byte-identical
    output.
    """
    rng = np.random.default_rng(cfg.seed)
    stubs = plan_windows(cfg, rng)
    total = sum(rec.window_len for rec in stubs)

    per_day = 1440 // cfg.ts
    # pad the clean buffer to whole days so daily amplitudes near the series
    # end still see a complete day
    padded = math.ceil(total / per_day) * per_day
    t = np.arange(padded, dtype=float) * cfg.ts
    base_padded = TimeSeries(base_signal(t), 0, cfg.ts)

    records = []
    tilde = TimeSeries(base_padded.values[:total], 0, cfg.ts)
    for stub in stubs:
        amp = daily_amplitude(base_padded, stub.i_a)
        strength = float(rng.uniform(*cfg.strength_range))
        rec = replace(stub, alpha=amp * strength)
        if rec.anomaly_class in ("temporary_change", "level_shift"):
            rec = draw_hat_params(rec, rng)
        tilde = inject(tilde, rec)
        records.append(rec)

    params = fit_scale_params(tilde)
    tilde_scaled = min_max_scale(tilde, params)
    base_scaled = min_max_scale(TimeSeries(base_padded.values[:total], 0, cfg.ts), params)
    final = add_noise(tilde_scaled, base_scaled, records, cfg.noise_sigma, rng)
    return final, records


def write_records(records: list[AnomalyRecord], path) -> None:
    with open(path, "w") as fh:
        json.dump([rec.to_dict() for rec in records], fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_records(path) -> list[AnomalyRecord]:
    with open(path) as fh:
        return [AnomalyRecord.from_dict(d) for d in json.load(fh)]
