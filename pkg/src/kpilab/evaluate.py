"""End-to-end evaluation: noise bins, rebalancing, grid search, experiments.

Two experiment modes exist.  ``run_sim_sim`` trains and tests on simulated
windows, one model per noise bin; ``run_sim_real`` trains on simulated windows
and tests on externally labeled windows from the same noise bin, scoring a
prediction as correct when it matches any assigned label and keeping
"other"-only windows out of the confusion matrix.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .classifiers import SupervisedTimeSeriesForest, TimeSeriesKnnClassifier
from .detect import detect_pipeline, SeasonalNaiveForecaster
from .simulate import SUBCLASSES, BALANCED_PROPORTIONS, IMBALANCED_PROPORTIONS, SimConfig, simulate
from .windows import OTHER_LABEL, AnalysisWindow

__all__ = [
    "NOISE_BINS",
    "OVERFLOW_BIN",
    "noise_bin",
    "bin_by_noise",
    "label_windows_from_records",
    "rebalance",
    "stratified_folds",
    "train_test_split_stratified",
    "grid_search",
    "GridSearchResult",
    "micro_f1",
    "per_class_f1",
    "confusion_matrix",
    "ExperimentConfig",
    "run_sim_sim",
    "run_sim_real",
    "report_to_csv_rows",
]

# Half-open noise-level ranges; series noisier than the last bin fall into the
# overflow bin, which is reported but excluded from bin-to-bin comparisons.
NOISE_BINS = (
    ("bin1", 0.0, 0.01),
    ("bin2", 0.01, 0.03),
    ("bin3", 0.03, 0.05),
    ("bin4", 0.05, 0.07),
    ("bin5", 0.07, 0.09),
)
OVERFLOW_BIN = "overflow"

# Bins with both simulated and real coverage; train-sim/test-real pairs share
# the bin edges.
PAIRED_BINS = ("bin2", "bin3", "bin4")


def noise_bin(sigma: float) -> str:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    for name, lo, hi in NOISE_BINS:
        if lo <= sigma < hi:
            return name
    return OVERFLOW_BIN


def bin_by_noise(windows, source_sigma: float | None = None) -> list[AnalysisWindow]:
    """Attach a noise bin to each window from its (or the given) sigma."""
    out = []
    for w in windows:
        sigma = source_sigma if source_sigma is not None else w.sigma
        if sigma is None:
            raise ValueError("window has no sigma and no source_sigma was given")
        out.append(w.with_noise_bin(noise_bin(sigma), sigma=sigma))
    return out


def label_windows_from_records(windows, records) -> list[AnalysisWindow]:
    """Assign each window the subclass of the record it overlaps most.

    Windows overlapping no record are dropped (they cannot carry a training
    label).  Ties go to the earliest record.
    """
    labeled = []
    for w in windows:
        best_overlap = 0
        best = None
        for rec in records:
            lo, hi = rec.span
            overlap = min(hi + 1, w.end) - max(lo, w.start)
            if overlap > best_overlap:
                best_overlap = overlap
                best = rec
        if best is not None:
            labeled.append(w.with_labels((best.subclass,)))
    return labeled


def rebalance(
    windows,
    mode: str = "balanced",
    target_proportions: dict | None = None,
    rng: np.random.Generator | None = None,
) -> list[AnalysisWindow]:
    """Subsample windows toward equal or target class proportions.

    "balanced" undersamples every class to the minority count.  "imbalanced"
    takes the minority count as the total budget and splits it across classes
    by largest-remainder rounding of the target proportions, so the sampled
    ratios are exact whenever the arithmetic allows.  Sampling is without
    replacement; classes demanded by the targets but absent from the data get
    a zero quota and a warning.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    by_class: dict[str, list[int]] = {}
    for idx, w in enumerate(windows):
        if not w.labels:
            raise ValueError("rebalance needs labeled windows")
        by_class.setdefault(w.labels[0], []).append(idx)

    if mode == "balanced":
        quota = {cls: min(len(v) for v in by_class.values()) for cls in by_class}
    elif mode == "imbalanced":
        if target_proportions is None:
            target_proportions = IMBALANCED_PROPORTIONS
        missing = [c for c, p in target_proportions.items() if p > 0 and c not in by_class]
        if missing:
            warnings.warn(f"no windows for target classes {sorted(missing)}; their quota is 0")
        present = {c: p for c, p in target_proportions.items() if c in by_class}
        total_p = sum(present.values())
        if total_p <= 0:
            raise ValueError("target proportions give no mass to any present class")
        budget = min(len(by_class[c]) for c in present)
        quota = _largest_remainder({c: p / total_p for c, p in present.items()}, budget)
        quota.update({c: 0 for c in by_class if c not in present})
    else:
        raise ValueError(f"unknown rebalance mode {mode!r}")

    picked: list[int] = []
    for cls in sorted(by_class):
        pool = np.asarray(by_class[cls])
        take = min(quota.get(cls, 0), pool.size)
        if take > 0:
            picked.extend(rng.choice(pool, size=take, replace=False).tolist())
    picked.sort()
    return [windows[i] for i in picked]


def _largest_remainder(proportions: dict[str, float], total: int) -> dict[str, int]:
    keys = sorted(proportions)
    raw = {k: proportions[k] * total for k in keys}
    counts = {k: int(raw[k]) for k in keys}
    leftover = total - sum(counts.values())
    remainders = sorted(keys, key=lambda k: (-(raw[k] - counts[k]), k))
    for k in remainders[:leftover]:
        counts[k] += 1
    return counts


def stratified_folds(y, k: int, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint k-fold partition keeping per-class counts within one sample."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("need at least 2 folds")
    fold_members: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        members = members[rng.permutation(members.size)]
        for pos, idx in enumerate(members):
            fold_members[pos % k].append(int(idx))
    folds = []
    all_idx = np.arange(y.size)
    for f in range(k):
        test = np.asarray(sorted(fold_members[f]), dtype=int)
        train = np.setdiff1d(all_idx, test)
        folds.append((train, test))
    return folds


def train_test_split_stratified(
    windows, train_frac: float, rng: np.random.Generator
) -> tuple[list[AnalysisWindow], list[AnalysisWindow]]:
    """Per-class split so small classes keep presence on both sides."""
    by_class: dict[str, list[int]] = {}
    for idx, w in enumerate(windows):
        by_class.setdefault(w.labels[0], []).append(idx)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in sorted(by_class):
        members = np.asarray(by_class[cls])
        members = members[rng.permutation(members.size)]
        cut = int(round(train_frac * members.size))
        cut = min(max(cut, 1), members.size - 1) if members.size >= 2 else members.size
        train_idx.extend(members[:cut].tolist())
        test_idx.extend(members[cut:].tolist())
    return [windows[i] for i in sorted(train_idx)], [windows[i] for i in sorted(test_idx)]


_FAMILIES = {
    "knn": TimeSeriesKnnClassifier,
    "stsf": SupervisedTimeSeriesForest,
}

DEFAULT_GRIDS = {
    "knn": {
        "n_neighbors": [1, 3, 5, 10, 20, 50],
        "distance": ["dtw", "ddtw", "wdtw"],
        "weighting": ["uniform", "distance"],
    },
    "stsf": {"n_estimators": [5, 50, 100, 200]},
}


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    best_score: float
    table: list[dict]


def make_classifier(family: str, params: dict):
    if family not in _FAMILIES:
        raise ValueError(f"unknown classifier family {family!r}")
    return _FAMILIES[family](**params)


def grid_search(
    X,
    y,
    family: str,
    grid: dict,
    cv_folds: int = 5,
    seed: int = 0,
) -> GridSearchResult:
    """Exhaustive search maximizing mean micro-F1 over stratified CV folds.

    Grid points expand as the product of the value lists in key order; ties on
    the mean score keep the earliest point.  When the smallest class has fewer
    members than ``cv_folds`` the fold count shrinks (with a warning) but
    never below 2.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    min_class = np.bincount(np.searchsorted(np.unique(y), y)).min()
    folds = cv_folds
    if min_class < folds:
        folds = max(2, int(min_class))
        warnings.warn(
            f"smallest class has {min_class} windows; reducing CV folds from {cv_folds} to {folds}"
        )
    rng = np.random.default_rng(seed)
    fold_sets = stratified_folds(y, folds, rng)

    keys = list(grid)
    table = []
    best: tuple[float, int] | None = None
    for point_no, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        params = dict(zip(keys, combo))
        scores = []
        for train_idx, test_idx in fold_sets:
            model = make_classifier(family, params)
            if family == "knn" and params.get("n_neighbors", 1) > train_idx.size:
                scores.append(0.0)
                continue
            model.fit(X[train_idx], y[train_idx])
            pred = model.predict(X[test_idx])
            scores.append(float(np.mean(pred == y[test_idx])))
        mean_score = float(np.mean(scores))
        table.append({"params": params, "mean_score": mean_score})
        if best is None or mean_score > best[0]:
            best = (mean_score, point_no)
    if best is None:
        raise ValueError("empty grid")
    return GridSearchResult(table[best[1]]["params"], best[0], table)


def confusion_matrix(y_true, y_pred, labels) -> np.ndarray:
    """Rows are truth, columns prediction, in the given label order."""
    index = {label: i for i, label in enumerate(labels)}
    out = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        out[index[t], index[p]] += 1
    return out


def micro_f1(confusion: np.ndarray) -> float:
    """Micro-averaged F1 over a confusion matrix (equals accuracy)."""
    confusion = np.asarray(confusion)
    total = confusion.sum()
    return float(np.trace(confusion) / total) if total else 0.0


def per_class_f1(confusion: np.ndarray) -> np.ndarray:
    """Per-class F1 = 2PR/(P+R); classes without support or predictions get 0."""
    confusion = np.asarray(confusion, dtype=float)
    tp = np.diag(confusion)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    denom = support + predicted
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2.0 * tp / denom, 0.0)
    return f1


def _collapse_directions(confusion8: np.ndarray, labels8) -> tuple[np.ndarray, list[str]]:
    """Merge peak/dip and growth/decrease columns into the four base classes."""
    bases = []
    for label in labels8:
        base = label.rsplit("_", 1)[0]
        if base not in bases:
            bases.append(base)
    out = np.zeros((len(bases), len(bases)), dtype=np.int64)
    for i, li in enumerate(labels8):
        for j, lj in enumerate(labels8):
            out[bases.index(li.rsplit("_", 1)[0]), bases.index(lj.rsplit("_", 1)[0])] += confusion8[i, j]
    return out, bases


@dataclass
class ExperimentConfig:
    """Everything a simulated-vs-simulated or simulated-vs-real run needs."""

    mode: str = "sim-sim"
    n: int = 250
    ts: int = 5
    sigmas: tuple[float, ...] = (0.0, 0.02, 0.04, 0.06, 0.08)
    proportions: str | dict = "balanced"
    rebalance_mode: str = "balanced"
    m: int = 24
    folds: int = 10
    template: str = "median"
    classifiers: dict = field(default_factory=lambda: {"stsf": {"n_estimators": [50]}})
    cv_folds: int = 5
    train_frac: float = 0.7
    seed: int = 0

    def proportions_dict(self) -> dict:
        if self.proportions == "balanced":
            return dict(BALANCED_PROPORTIONS)
        if self.proportions == "imbalanced":
            return dict(IMBALANCED_PROPORTIONS)
        return dict(self.proportions)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "ts": self.ts,
            "sigmas": list(self.sigmas),
            "proportions": self.proportions,
            "rebalance_mode": self.rebalance_mode,
            "m": self.m,
            "folds": self.folds,
            "template": self.template,
            "classifiers": self.classifiers,
            "cv_folds": self.cv_folds,
            "train_frac": self.train_frac,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cfg = cls()
        for key, value in d.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown experiment config key {key!r}")
            setattr(cfg, key, value)
        cfg.sigmas = tuple(float(s) for s in cfg.sigmas)
        return cfg


def _window_matrix(windows) -> tuple[np.ndarray, np.ndarray]:
    X = np.vstack([w.values for w in windows])
    y = np.asarray([w.labels[0] for w in windows])
    return X, y


def simulate_and_detect(cfg: ExperimentConfig) -> tuple[list[AnalysisWindow], dict]:
    """Simulate one series per sigma, detect, and label windows from truth."""
    master = np.random.default_rng(cfg.seed)
    windows: list[AnalysisWindow] = []
    detection = {}
    for sigma in cfg.sigmas:
        sim_seed = int(master.integers(2**31))
        sim_cfg = SimConfig(
            n=cfg.n,
            ts=cfg.ts,
            noise_sigma=float(sigma),
            proportions=cfg.proportions_dict(),
            seed=sim_seed,
        )
        series, records = simulate(sim_cfg)
        found, score = detect_pipeline(
            series,
            forecaster=SeasonalNaiveForecaster(template=cfg.template),
            m=cfg.m,
            folds=cfg.folds,
            records=records,
            series_id=f"sim-sigma-{sigma:g}",
        )
        found = bin_by_noise(found, source_sigma=float(sigma))
        windows.extend(label_windows_from_records(found, records))
        detection[f"{sigma:g}"] = score.to_dict()
    return windows, detection


def _evaluate_split(train_windows, test_windows, cfg: ExperimentConfig, rng) -> dict:
    X_train, y_train = _window_matrix(train_windows)
    X_test, y_test = _window_matrix(test_windows)
    results = {}
    for family in sorted(cfg.classifiers):
        grid = cfg.classifiers[family]
        search = grid_search(X_train, y_train, family, grid, cfg.cv_folds, seed=int(rng.integers(2**31)))
        model = make_classifier(family, search.best_params)
        model.fit(X_train, y_train)
        pred = model.predict(X_test)
        cm = confusion_matrix(y_test, pred, SUBCLASSES)
        cm4, bases = _collapse_directions(cm, SUBCLASSES)
        results[family] = {
            "best_params": search.best_params,
            "cv_table": search.table,
            "micro_f1": micro_f1(cm),
            "per_class_f1": dict(zip(SUBCLASSES, per_class_f1(cm).tolist())),
            "per_class_f1_merged": dict(zip(bases, per_class_f1(cm4).tolist())),
            "confusion": cm.tolist(),
            "confusion_labels": list(SUBCLASSES),
            "n_train": len(train_windows),
            "n_test": len(test_windows),
        }
    return results


def run_sim_sim(cfg: ExperimentConfig) -> dict:
    """Per-bin train/test evaluation on simulated windows."""
    windows, detection = simulate_and_detect(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    bins: dict[str, dict] = {}
    for bin_name in [b[0] for b in NOISE_BINS] + [OVERFLOW_BIN]:
        members = [w for w in windows if w.noise_bin == bin_name]
        if not members:
            continue
        balanced = rebalance(members, cfg.rebalance_mode, rng=rng)
        if len({w.labels[0] for w in balanced}) < 2:
            bins[bin_name] = {"skipped": "fewer than two classes after rebalancing"}
            continue
        train_w, test_w = train_test_split_stratified(balanced, cfg.train_frac, rng)
        bins[bin_name] = _evaluate_split(train_w, test_w, cfg, rng)
    return {
        "mode": "sim-sim",
        "config": cfg.to_dict(),
        "detection": detection,
        "bins": bins,
    }


def run_sim_real(cfg: ExperimentConfig, real_windows) -> dict:
    """Train per bin on simulated windows, test on externally labeled windows.

    Real windows must carry labels and a noise bin.  Windows labeled only
    "other" are counted but excluded from the confusion matrix; multi-label
    windows score as correct when the prediction matches any of their labels.
    """
    sim_windows, detection = simulate_and_detect(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    bins: dict[str, dict] = {}
    for bin_name in PAIRED_BINS:
        sim_members = [w for w in sim_windows if w.noise_bin == bin_name]
        real_members = [w for w in real_windows if w.noise_bin == bin_name]
        if not sim_members or not real_members:
            continue
        balanced = rebalance(sim_members, cfg.rebalance_mode, rng=rng)
        if len({w.labels[0] for w in balanced}) < 2:
            bins[bin_name] = {"skipped": "fewer than two classes after rebalancing"}
            continue
        X_train, y_train = _window_matrix(balanced)
        scorable = [w for w in real_members if set(w.labels) - {OTHER_LABEL}]
        other_only = len(real_members) - len(scorable)
        bins[bin_name] = {"n_real": len(real_members), "n_other_only": other_only}
        if not scorable:
            continue
        X_real = np.vstack([w.values for w in scorable])
        for family in sorted(cfg.classifiers):
            grid = cfg.classifiers[family]
            search = grid_search(
                X_train, y_train, family, grid, cfg.cv_folds, seed=int(rng.integers(2**31))
            )
            model = make_classifier(family, search.best_params)
            model.fit(X_train, y_train)
            pred = model.predict(X_real)
            correct = 0
            cm = np.zeros((len(SUBCLASSES), len(SUBCLASSES)), dtype=np.int64)
            index = {label: i for i, label in enumerate(SUBCLASSES)}
            for w, p in zip(scorable, pred):
                labels = [l for l in w.labels if l != OTHER_LABEL]
                if p in labels:
                    correct += 1
                    cm[index[p], index[p]] += 1
                else:
                    cm[index[labels[0]], index[p]] += 1
            bins[bin_name][family] = {
                "best_params": search.best_params,
                "micro_f1": correct / len(scorable),
                "per_class_f1": dict(zip(SUBCLASSES, per_class_f1(cm).tolist())),
                "confusion": cm.tolist(),
                "confusion_labels": list(SUBCLASSES),
                "n_train": len(balanced),
                "n_test": len(scorable),
            }
    return {
        "mode": "sim-real",
        "config": cfg.to_dict(),
        "detection": detection,
        "bins": bins,
    }


def report_to_csv_rows(report: dict) -> list[str]:
    """Flatten the per-bin metrics for spreadsheet use."""
    rows = ["bin,classifier,metric,value"]
    for bin_name in sorted(report.get("bins", {})):
        entry = report["bins"][bin_name]
        for family in sorted(k for k in entry if isinstance(entry[k], dict) and "micro_f1" in entry[k]):
            rows.append(f"{bin_name},{family},micro_f1,{entry[family]['micro_f1']:.6f}")
            for cls, value in sorted(entry[family].get("per_class_f1", {}).items()):
                rows.append(f"{bin_name},{family},f1_{cls},{value:.6f}")
    return rows
