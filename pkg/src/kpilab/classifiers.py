"""Window classifiers: elastic-distance kNN and a supervised interval forest.

Both expose the usual fit/predict/predict_proba surface over a 2-d array of
equal-length windows, and both serialize to JSON so trained models can be
shipped next to the window files they were built from.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.tree import DecisionTreeClassifier

from .distances import DISTANCES

__all__ = [
    "periodogram",
    "TimeSeriesKnnClassifier",
    "SupervisedTimeSeriesForest",
    "FEATURE_NAMES",
    "REPRESENTATIONS",
    "fisher_score",
]

_EPS_DISTANCE = 1e-10
_EPS_FISHER = 1e-12


def periodogram(x) -> np.ndarray:
    """Squared DFT magnitudes for frequency bins 1..floor(n/2) (DC excluded).

    Interior bins are doubled so that the sum of the periodogram plus the DC
    term equals n * sum(x**2) (the discrete Parseval identity); for even n the
    Nyquist bin keeps single weight.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        raise ValueError("periodogram needs at least 4 samples")
    spec = np.abs(np.fft.rfft(x)) ** 2
    power = 2.0 * spec[1:]
    if n % 2 == 0:
        power[-1] = spec[-1]
    return power


def _row_slope(rows: np.ndarray) -> np.ndarray:
    """Least-squares slope of each row against sample positions 0..L-1."""
    length = rows.shape[1]
    if length < 2:
        return np.zeros(rows.shape[0])
    pos = np.arange(length, dtype=float)
    pos_c = pos - pos.mean()
    denom = float(np.dot(pos_c, pos_c))
    return (rows - rows.mean(axis=1, keepdims=True)) @ pos_c / denom


def _row_iqr(rows: np.ndarray) -> np.ndarray:
    q75, q25 = np.percentile(rows, [75, 25], axis=1)
    return q75 - q25


_FEATURE_FNS = {
    "mean": lambda rows: rows.mean(axis=1),
    "median": lambda rows: np.median(rows, axis=1),
    "std": lambda rows: rows.std(axis=1),
    "slope": _row_slope,
    "iqr": _row_iqr,
    "min": lambda rows: rows.min(axis=1),
    "max": lambda rows: rows.max(axis=1),
}
FEATURE_NAMES = tuple(_FEATURE_FNS)

REPRESENTATIONS = ("original", "periodogram", "diff")


def _representations(X: np.ndarray) -> dict[str, np.ndarray]:
    reps = {"original": X}
    if X.shape[1] >= 4:
        reps["periodogram"] = np.apply_along_axis(periodogram, 1, X)
    reps["diff"] = np.diff(X, axis=1)
    return reps


def fisher_score(values: np.ndarray, y_codes: np.ndarray, n_classes: int) -> float:
    """Between-class variance over within-class variance of a feature column."""
    overall = values.mean()
    between = 0.0
    within = 0.0
    n = values.size
    for c in range(n_classes):
        member = values[y_codes == c]
        if member.size == 0:
            continue
        frac = member.size / n
        mu = member.mean()
        between += frac * (mu - overall) ** 2
        within += frac * member.var()
    return float(between / (within + _EPS_FISHER))


class TimeSeriesKnnClassifier(BaseEstimator, ClassifierMixin):
    """k-nearest-neighbour classification under an elastic distance.

    Parameters follow the usual grid: ``n_neighbors`` in {1, 3, 5, 10, 20,
    50}, ``distance`` one of the registered metrics, ``weighting`` either
    "uniform" or "distance" (inverse distance with a small epsilon).  Exact
    distance ties keep training order; vote ties go to the class encountered
    first among the neighbours.
    """

    def __init__(
        self,
        n_neighbors: int = 1,
        distance: str = "dtw",
        weighting: str = "uniform",
        window_frac: float = 1.0,
        g: float = 0.05,
    ):
        self.n_neighbors = n_neighbors
        self.distance = distance
        self.weighting = weighting
        self.window_frac = window_frac
        self.g = g

    def fit(self, X, y) -> "TimeSeriesKnnClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n_windows, length) matching y")
        if self.n_neighbors < 1 or self.n_neighbors > X.shape[0]:
            raise ValueError(
                f"n_neighbors={self.n_neighbors} must be within the {X.shape[0]} training windows"
            )
        if self.distance not in DISTANCES:
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.weighting not in ("uniform", "distance"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        self.X_ = X
        self.y_ = y
        self.classes_ = np.unique(y)
        return self

    def _metric(self, a, b) -> float:
        if self.distance == "wdtw":
            return DISTANCES["wdtw"](a, b, g=self.g)
        return DISTANCES[self.distance](a, b, window_frac=self.window_frac)

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        out = np.zeros((X.shape[0], self.classes_.size))
        class_index = {c: i for i, c in enumerate(self.classes_)}
        for row, query in enumerate(X):
            dists = np.asarray([self._metric(query, ref) for ref in self.X_])
            order = np.argsort(dists, kind="stable")[: self.n_neighbors]
            votes = np.zeros(self.classes_.size)
            for idx in order:
                if self.weighting == "distance":
                    weight = 1.0 / (dists[idx] + _EPS_DISTANCE)
                else:
                    weight = 1.0
                votes[class_index[self.y_[idx]]] += weight
            total = votes.sum()
            out[row] = votes / total if total > 0 else votes
        return out

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        preds = []
        class_index = {c: i for i, c in enumerate(self.classes_)}
        for query in X:
            dists = np.asarray([self._metric(query, ref) for ref in self.X_])
            order = np.argsort(dists, kind="stable")[: self.n_neighbors]
            votes = np.zeros(self.classes_.size)
            first_seen = np.full(self.classes_.size, np.iinfo(np.int64).max, dtype=np.int64)
            for rank, idx in enumerate(order):
                ci = class_index[self.y_[idx]]
                if self.weighting == "distance":
                    votes[ci] += 1.0 / (dists[idx] + _EPS_DISTANCE)
                else:
                    votes[ci] += 1.0
                first_seen[ci] = min(first_seen[ci], rank)
            best = np.flatnonzero(votes == votes.max())
            # tie-break: the class whose first voting neighbour came earliest
            winner = best[np.argmin(first_seen[best])]
            preds.append(self.classes_[winner])
        return np.asarray(preds)

    def _check_fitted(self) -> None:
        if not hasattr(self, "X_"):
            raise NotFittedError("classifier must be fitted first")

    def to_json_dict(self, window_file: str, indices: list[int]) -> dict:
        """Reference-based persistence: the training set stays in its JSONL file."""
        self._check_fitted()
        return {
            "model": "knn",
            "params": self.get_params(),
            "window_file": window_file,
            "indices": [int(i) for i in indices],
            "labels": [str(v) for v in self.y_],
        }

    @classmethod
    def from_json_dict(cls, d: dict, X: np.ndarray) -> "TimeSeriesKnnClassifier":
        model = cls(**d["params"])
        return model.fit(X, np.asarray(d["labels"]))


@dataclass(frozen=True)
class _Interval:
    rep: int  # index into REPRESENTATIONS
    feature: int  # index into FEATURE_NAMES
    start: int
    end: int


class SupervisedTimeSeriesForest(BaseEstimator, ClassifierMixin):
    """Interval-feature tree ensemble with supervised interval selection.

    Per tree: a class-balanced bootstrap (equal draws per class, with
    replacement); for every representation (original series, periodogram,
    first difference) and every summary feature, the index range is split at a
    random cut and each side is then repeatedly bisected, keeping whichever
    half scores higher on the Fisher criterion, until intervals fall below two
    samples.  Each kept interval contributes one feature column to a CART tree
    (Gini, unlimited depth, leaves down to one sample).  Prediction averages
    hard votes; score ties resolve to the lexicographically first label.
    """

    def __init__(self, n_estimators: int = 50, random_state: int | None = None):
        self.n_estimators = n_estimators
        self.random_state = random_state

    def fit(self, X, y) -> "SupervisedTimeSeriesForest":
        X = np.asarray(X, dtype=float)
        y = np.asarray([str(v) for v in y])
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n_windows, length) matching y")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("training data must contain at least two classes")
        y_codes = np.searchsorted(self.classes_, y)
        counts = np.bincount(y_codes, minlength=self.classes_.size)
        if counts.min() < 2:
            raise ValueError("every class needs at least two training windows")

        rng = np.random.default_rng(self.random_state)
        reps = _representations(X)
        rep_names = [name for name in REPRESENTATIONS if name in reps]
        per_class = math.ceil(X.shape[0] / self.classes_.size)
        class_members = [np.flatnonzero(y_codes == c) for c in range(self.classes_.size)]

        self.trees_: list[dict] = []
        self.intervals_: list[list[_Interval]] = []
        self.rep_names_ = tuple(rep_names)
        for _ in range(self.n_estimators):
            picked = [rng.choice(members, size=per_class, replace=True) for members in class_members]
            sample = np.concatenate(picked)
            sample_codes = y_codes[sample]
            intervals: list[_Interval] = []
            columns: list[np.ndarray] = []
            for rep_idx, rep_name in enumerate(rep_names):
                rows = reps[rep_name][sample]
                for feat_idx in range(len(FEATURE_NAMES)):
                    _search_intervals(
                        rows, sample_codes, self.classes_.size, rep_idx, feat_idx,
                        rng, intervals, columns,
                    )
            if not columns:  # no informative split found anywhere; fall back to whole-series features
                for rep_idx, rep_name in enumerate(rep_names):
                    rows = reps[rep_name][sample]
                    for feat_idx, feat in enumerate(FEATURE_NAMES):
                        intervals.append(_Interval(rep_idx, feat_idx, 0, rows.shape[1]))
                        columns.append(_FEATURE_FNS[feat](rows))
            feature_matrix = np.column_stack(columns)
            tree = DecisionTreeClassifier(
                criterion="gini", random_state=int(rng.integers(2**31))
            ).fit(feature_matrix, sample_codes)
            self.trees_.append(_tree_to_arrays(tree, self.classes_.size))
            self.intervals_.append(intervals)
        return self

    def _transform(self, X: np.ndarray, intervals: list[_Interval]) -> np.ndarray:
        reps = _representations(X)
        columns = []
        for iv in intervals:
            rows = reps[self.rep_names_[iv.rep]][:, iv.start : iv.end]
            columns.append(_FEATURE_FNS[FEATURE_NAMES[iv.feature]](rows))
        return np.column_stack(columns)

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        votes = np.zeros((X.shape[0], self.classes_.size))
        for tree, intervals in zip(self.trees_, self.intervals_):
            feats = self._transform(X, intervals)
            leaves = _tree_predict(tree, feats)
            for row, cls in enumerate(leaves):
                votes[row, cls] += 1.0
        return votes / len(self.trees_)

    def predict(self, X) -> np.ndarray:
        scores = self.predict_proba(X)
        # argmax takes the first maximum, and classes_ is sorted, so ties fall
        # to the lexicographically first label
        return self.classes_[np.argmax(scores, axis=1)]

    def _check_fitted(self) -> None:
        if not hasattr(self, "trees_"):
            raise NotFittedError("classifier must be fitted first")

    def to_json_dict(self) -> dict:
        self._check_fitted()
        return {
            "model": "stsf",
            "params": self.get_params(),
            "classes": [str(c) for c in self.classes_],
            "rep_names": list(self.rep_names_),
            "trees": [
                {
                    "intervals": [[iv.rep, iv.feature, iv.start, iv.end] for iv in intervals],
                    "children_left": tree["children_left"].tolist(),
                    "children_right": tree["children_right"].tolist(),
                    "feature": tree["feature"].tolist(),
                    "threshold": tree["threshold"].tolist(),
                    "leaf_class": tree["leaf_class"].tolist(),
                }
                for tree, intervals in zip(self.trees_, self.intervals_)
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SupervisedTimeSeriesForest":
        model = cls(**d["params"])
        model.classes_ = np.asarray(d["classes"])
        model.rep_names_ = tuple(d["rep_names"])
        model.trees_ = []
        model.intervals_ = []
        for entry in d["trees"]:
            model.trees_.append(
                {
                    "children_left": np.asarray(entry["children_left"], dtype=np.int64),
                    "children_right": np.asarray(entry["children_right"], dtype=np.int64),
                    "feature": np.asarray(entry["feature"], dtype=np.int64),
                    "threshold": np.asarray(entry["threshold"], dtype=float),
                    "leaf_class": np.asarray(entry["leaf_class"], dtype=np.int64),
                }
            )
            model.intervals_.append([_Interval(*iv) for iv in entry["intervals"]])
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SupervisedTimeSeriesForest":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _search_intervals(rows, y_codes, n_classes, rep_idx, feat_idx, rng, intervals, columns):
    """Random cut, then greedy bisection of each side.

    Every kept half becomes one feature column; recursion stops once a half
    cannot be bisected (fewer than 2 samples) or neither half separates the
    classes (both Fisher scores zero).
    """
    length = rows.shape[1]
    if length < 2:
        return
    feat = _FEATURE_FNS[FEATURE_NAMES[feat_idx]]
    cut = int(rng.integers(1, length)) if length > 2 else 1
    for start, end in ((0, cut), (cut, length)):
        while end - start >= 2:
            mid = (start + end) // 2
            left = feat(rows[:, start:mid])
            right = feat(rows[:, mid:end])
            score_left = fisher_score(left, y_codes, n_classes)
            score_right = fisher_score(right, y_codes, n_classes)
            if score_left >= score_right and score_left > 0:
                intervals.append(_Interval(rep_idx, feat_idx, start, mid))
                columns.append(left)
                end = mid
            elif score_right > score_left:
                intervals.append(_Interval(rep_idx, feat_idx, mid, end))
                columns.append(right)
                start = mid
            else:
                break


def _tree_to_arrays(tree: DecisionTreeClassifier, n_classes: int) -> dict:
    t = tree.tree_
    leaf_class = np.zeros(t.node_count, dtype=np.int64)
    # a tree may have been trained on a bootstrap lacking some class order; map
    # its internal classes back into the forest's class indexing
    tree_classes = tree.classes_
    for node in range(t.node_count):
        if t.children_left[node] == -1:
            local = int(np.argmax(t.value[node][0]))
            leaf_class[node] = int(tree_classes[local])
    return {
        "children_left": t.children_left.copy(),
        "children_right": t.children_right.copy(),
        "feature": t.feature.copy(),
        "threshold": t.threshold.copy(),
        "leaf_class": leaf_class,
    }


def _tree_predict(tree: dict, feats: np.ndarray) -> np.ndarray:
    left = tree["children_left"]
    right = tree["children_right"]
    feature = tree["feature"]
    threshold = tree["threshold"]
    leaf_class = tree["leaf_class"]
    out = np.empty(feats.shape[0], dtype=np.int64)
    for row in range(feats.shape[0]):
        node = 0
        while left[node] != -1:
            if feats[row, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[row] = leaf_class[node]
    return out
