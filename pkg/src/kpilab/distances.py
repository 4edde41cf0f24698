"""Elastic distances between equal- or unequal-length sequences.

All variants share one dynamic program over a squared pointwise cost with the
usual step pattern (match, insert, delete).  The registry at the bottom is the
lookup used by the classifiers; additional metrics can be registered without
touching the callers.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["dtw", "ddtw", "wdtw", "DISTANCES", "register_distance", "derivative"]


def _band_width(n: int, m: int, window_frac: float) -> int | None:
    """Sakoe-Chiba half-width in cells; None disables the band."""
    if window_frac >= 1.0:
        return None
    if window_frac < 0:
        raise ValueError("window_frac must be >= 0")
    width = int(math.ceil(window_frac * max(n, m)))
    if abs(n - m) > width:
        raise ValueError(
            f"band width {width} cannot align lengths {n} and {m}; widen window_frac"
        )
    return width


def _dtw_core(a: np.ndarray, b: np.ndarray, width: int | None, weights: np.ndarray | None) -> float:
    n, m = a.size, b.size
    inf = math.inf
    prev = [inf] * (m + 1)
    prev[0] = 0.0
    av = a.tolist()
    bv = b.tolist()
    for i in range(1, n + 1):
        cur = [inf] * (m + 1)
        if width is None:
            j_lo, j_hi = 1, m
        else:
            j_lo = max(1, i - width)
            j_hi = min(m, i + width)
        ai = av[i - 1]
        wrow = weights[i - 1] if weights is not None else None
        for j in range(j_lo, j_hi + 1):
            d = ai - bv[j - 1]
            cost = d * d
            if wrow is not None:
                cost *= wrow[j - 1]
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = cost + best
        prev = cur
    return float(prev[m])


def dtw(a, b, window_frac: float = 1.0) -> float:
    """Dynamic time warping distance with squared pointwise cost.

    ``window_frac`` scales the Sakoe-Chiba band relative to the longer input;
    1.0 leaves the warp unconstrained and 0.0 forces the diagonal (equal
    lengths only, where the result equals the squared L2 distance).
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("inputs must be non-empty")
    width = _band_width(a.size, b.size, window_frac)
    return _dtw_core(a, b, width, None)


def derivative(a: np.ndarray) -> np.ndarray:
    """Slope estimate per sample: mean of the one-step and two-step slopes.

    d(i) = ((a_i - a_{i-1}) + (a_{i+1} - a_{i-1}) / 2) / 2 for interior
    samples; the endpoints copy their nearest interior value.
    """
    a = np.asarray(a, dtype=float).ravel()
    if a.size < 3:
        raise ValueError("derivative needs at least 3 samples")
    d = np.empty_like(a)
    d[1:-1] = ((a[1:-1] - a[:-2]) + (a[2:] - a[:-2]) / 2.0) / 2.0
    d[0] = d[1]
    d[-1] = d[-2]
    return d


def ddtw(a, b, window_frac: float = 1.0) -> float:
    """DTW on the derivative transform of both inputs."""
    return dtw(derivative(np.asarray(a, dtype=float)), derivative(np.asarray(b, dtype=float)), window_frac)


def wdtw(a, b, g: float = 0.05) -> float:
    """Weighted DTW: squared cost scaled by a logistic weight on |i - j|.

    w(k) = 1 / (1 + exp(-g * (k - L / 2))) with L the longer input length, so
    alignments far off the diagonal pay more.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("inputs must be non-empty")
    length = max(a.size, b.size)
    k = np.abs(np.arange(a.size)[:, None] - np.arange(b.size)[None, :])
    weights = 1.0 / (1.0 + np.exp(-g * (k - length / 2.0)))
    return _dtw_core(a, b, None, weights)


DISTANCES = {
    "dtw": dtw,
    "ddtw": ddtw,
    "wdtw": wdtw,
}


def register_distance(name: str, fn) -> None:
    """Extension point for additional elastic metrics (lcss, erp, msm, ...)."""
    if name in DISTANCES:
        raise ValueError(f"distance {name!r} already registered")
    DISTANCES[name] = fn
