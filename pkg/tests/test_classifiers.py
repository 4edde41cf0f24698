import numpy as np
import pytest
from sklearn.exceptions import NotFittedError
from sklearn.tree import DecisionTreeClassifier

from kpilab.classifiers import (
    FEATURE_NAMES,
    REPRESENTATIONS,
    SupervisedTimeSeriesForest,
    TimeSeriesKnnClassifier,
    _row_slope,
    _tree_predict,
    _tree_to_arrays,
    fisher_score,
    periodogram,
)


def dft_periodogram(x):
    """Periodogram via the O(n^2) DFT definition, independent of the FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    j = np.arange(n)
    out = []
    for k in range(1, n // 2 + 1):
        coeff = np.sum(x * np.exp(-2j * np.pi * k * j / n))
        power = abs(coeff) ** 2
        out.append(power if (n % 2 == 0 and k == n // 2) else 2.0 * power)
    return np.asarray(out)


class TestPeriodogram:
    def test_matches_direct_dft(self):
        rng = np.random.default_rng(0)
        for n in (4, 5, 8, 17, 24, 48):
            x = rng.normal(size=n)
            assert np.allclose(periodogram(x), dft_periodogram(x), rtol=1e-9, atol=1e-9)

    def test_parseval_identity(self):
        rng = np.random.default_rng(1)
        for n in (6, 7, 32, 33):
            x = rng.normal(size=n)
            total = np.sum(x) ** 2 + np.sum(periodogram(x))
            assert total == pytest.approx(n * np.sum(x**2), rel=1e-10)

    def test_single_tone_concentrates(self):
        n = 64
        x = np.cos(2 * np.pi * 5 * np.arange(n) / n)
        p = periodogram(x)
        assert np.argmax(p) == 4  # bins start at frequency 1
        assert p[4] == pytest.approx(2 * (n / 2) ** 2, rel=1e-9)
        assert np.sum(np.delete(p, 4)) < 1e-9

    def test_too_short(self):
        with pytest.raises(ValueError):
            periodogram(np.ones(3))


class TestRowSlope:
    def test_matches_polyfit(self):
        rng = np.random.default_rng(2)
        rows = rng.normal(size=(20, 15))
        got = _row_slope(rows)
        pos = np.arange(15)
        for row, value in zip(rows, got):
            assert value == pytest.approx(np.polyfit(pos, row, 1)[0], rel=1e-9, abs=1e-12)

    def test_exact_on_lines(self):
        rows = np.outer([2.0, -0.5, 0.0], np.arange(10)) + 3.0
        assert np.allclose(_row_slope(rows), [2.0, -0.5, 0.0], atol=1e-12)


class TestFisherScore:
    def test_hand_computed(self):
        values = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([0, 0, 1, 1])
        # between = 1.0, within = 0.25
        assert fisher_score(values, y, 2) == pytest.approx(4.0, rel=1e-9)

    def test_perfect_separation_dominates(self):
        values = np.array([0.0, 0.0, 1.0, 1.0])
        assert fisher_score(values, np.array([0, 0, 1, 1]), 2) > 1e10

    def test_no_separation_near_zero(self):
        values = np.array([0.0, 1.0, 0.0, 1.0])
        assert fisher_score(values, np.array([0, 0, 1, 1]), 2) < 1e-9

    def test_absent_class_ignored(self):
        values = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([0, 0, 2, 2])
        assert fisher_score(values, y, 3) == pytest.approx(4.0, rel=1e-9)


def _two_shapes(n_per_class, length, seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, length)
    rows, labels = [], []
    for _ in range(n_per_class):
        rows.append(np.sin(2 * np.pi * t) + rng.normal(0, 0.05, length))
        labels.append("wave")
        rows.append(2.0 * t + rng.normal(0, 0.05, length))
        labels.append("ramp")
    return np.asarray(rows), np.asarray(labels)


class TestKnn:
    def test_separable_shapes(self):
        X, y = _two_shapes(10, 24, seed=3)
        Xq, yq = _two_shapes(5, 24, seed=4)
        for distance in ("dtw", "ddtw", "wdtw"):
            model = TimeSeriesKnnClassifier(n_neighbors=3, distance=distance).fit(X, y)
            assert np.array_equal(model.predict(Xq), yq)

    def test_distance_tie_keeps_training_order(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [9.0, 9.0]])
        y = np.array(["a", "b", "c"])
        model = TimeSeriesKnnClassifier(n_neighbors=2).fit(X, y)
        assert model.predict(np.array([[0.0, 0.0]]))[0] == "a"

    def test_vote_tie_goes_to_first_neighbour(self):
        X = np.array([[1.0, 1.0], [0.0, 0.0], [2.0, 2.0], [3.0, 3.0]])
        y = np.array(["b", "a", "b", "a"])
        # neighbour order for the query: b (d=0), a (d=2), b (d=2), a (d=8)
        model = TimeSeriesKnnClassifier(n_neighbors=4).fit(X, y)
        assert model.predict(np.array([[1.0, 1.0]]))[0] == "b"

    def test_inverse_distance_weighting_flips_majority(self):
        X = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 3.0]])
        y = np.array(["a", "a", "b"])
        query = np.array([[2.5, 2.5]])
        uniform = TimeSeriesKnnClassifier(n_neighbors=3, weighting="uniform").fit(X, y)
        weighted = TimeSeriesKnnClassifier(n_neighbors=3, weighting="distance").fit(X, y)
        assert uniform.predict(query)[0] == "a"
        assert weighted.predict(query)[0] == "b"

    def test_proba_fractions(self):
        X = np.array([[0.0, 0.0], [0.1, 0.1], [3.0, 3.0]])
        y = np.array(["a", "a", "b"])
        model = TimeSeriesKnnClassifier(n_neighbors=3).fit(X, y)
        proba = model.predict_proba(np.array([[0.0, 0.0]]))
        assert proba.shape == (1, 2)
        assert proba[0].tolist() == [2 / 3, 1 / 3]

    def test_band_fraction_forwarded(self):
        X = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        y = np.array(["lo", "hi"])
        model = TimeSeriesKnnClassifier(n_neighbors=1, window_frac=0.0).fit(X, y)
        assert model.predict(np.array([[0.9, 0.9, 0.9]]))[0] == "hi"

    def test_errors(self):
        X, y = _two_shapes(2, 8, seed=5)
        with pytest.raises(ValueError):
            TimeSeriesKnnClassifier(n_neighbors=9).fit(X, y)
        with pytest.raises(ValueError):
            TimeSeriesKnnClassifier(distance="lcss").fit(X, y)
        with pytest.raises(ValueError):
            TimeSeriesKnnClassifier(weighting="gaussian").fit(X, y)
        with pytest.raises(NotFittedError):
            TimeSeriesKnnClassifier().predict(X)

    def test_json_round_trip(self):
        X, y = _two_shapes(5, 16, seed=6)
        Xq, _ = _two_shapes(3, 16, seed=7)
        model = TimeSeriesKnnClassifier(n_neighbors=3, distance="wdtw", g=0.1).fit(X, y)
        blob = model.to_json_dict("windows.jsonl", list(range(len(y))))
        assert blob["model"] == "knn" and blob["window_file"] == "windows.jsonl"
        clone = TimeSeriesKnnClassifier.from_json_dict(blob, X)
        assert np.array_equal(clone.predict(Xq), model.predict(Xq))
        assert clone.get_params() == model.get_params()


def _three_class_set(n_per_class, length, seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, length)
    rows, labels = [], []
    for _ in range(n_per_class):
        rows.append(rng.normal(0.0, 0.1, length))
        labels.append("flat")
        rows.append(2.0 * t + rng.normal(0.0, 0.1, length))
        labels.append("ramp")
        rows.append(np.sin(4 * np.pi * t) + rng.normal(0.0, 0.1, length))
        labels.append("wave")
    return np.asarray(rows), np.asarray(labels)


class TestForest:
    def test_separable_accuracy(self):
        X, y = _three_class_set(15, 24, seed=8)
        Xq, yq = _three_class_set(10, 24, seed=9)
        model = SupervisedTimeSeriesForest(n_estimators=25, random_state=0).fit(X, y)
        assert np.mean(model.predict(Xq) == yq) >= 0.95

    def test_proba_shape_and_normalisation(self):
        X, y = _three_class_set(5, 24, seed=10)
        model = SupervisedTimeSeriesForest(n_estimators=10, random_state=1).fit(X, y)
        proba = model.predict_proba(X[:7])
        assert proba.shape == (7, 3)
        assert np.allclose(proba.sum(axis=1), 1.0)

    def test_deterministic_under_seed(self):
        X, y = _three_class_set(8, 24, seed=11)
        a = SupervisedTimeSeriesForest(n_estimators=12, random_state=42).fit(X, y)
        b = SupervisedTimeSeriesForest(n_estimators=12, random_state=42).fit(X, y)
        assert a.to_json_dict() == b.to_json_dict()
        assert np.array_equal(a.predict(X), b.predict(X))

    def test_save_load_predictions_identical(self, tmp_path):
        X, y = _three_class_set(8, 24, seed=12)
        Xq, _ = _three_class_set(6, 24, seed=13)
        model = SupervisedTimeSeriesForest(n_estimators=15, random_state=3).fit(X, y)
        path = tmp_path / "stsf.json"
        model.save(path)
        clone = SupervisedTimeSeriesForest.load(path)
        assert np.array_equal(clone.predict_proba(Xq), model.predict_proba(Xq))
        assert np.array_equal(clone.predict(Xq), model.predict(Xq))

    def test_score_tie_resolves_to_first_label(self):
        leaf = {
            "children_left": [-1],
            "children_right": [-1],
            "feature": [-2],
            "threshold": [-2.0],
            "leaf_class": None,
        }
        blob = {
            "model": "stsf",
            "params": {"n_estimators": 2, "random_state": None},
            "classes": ["left", "right"],
            "rep_names": list(REPRESENTATIONS),
            "trees": [
                {**leaf, "leaf_class": [1], "intervals": [[0, 0, 0, 8]]},
                {**leaf, "leaf_class": [0], "intervals": [[0, 0, 0, 8]]},
            ],
        }
        model = SupervisedTimeSeriesForest.from_json_dict(blob)
        X = np.ones((3, 8))
        assert np.allclose(model.predict_proba(X), 0.5)
        assert model.predict(X).tolist() == ["left"] * 3

    def test_errors(self):
        X, y = _three_class_set(4, 24, seed=14)
        with pytest.raises(ValueError):
            SupervisedTimeSeriesForest(n_estimators=0).fit(X, y)
        with pytest.raises(ValueError):
            SupervisedTimeSeriesForest().fit(X, np.full(len(y), "only"))
        with pytest.raises(ValueError):
            SupervisedTimeSeriesForest().fit(X[:3], np.array(["a", "a", "b"]))
        with pytest.raises(NotFittedError):
            SupervisedTimeSeriesForest().predict(X)

    def test_feature_layout(self):
        X, y = _three_class_set(5, 24, seed=15)
        model = SupervisedTimeSeriesForest(n_estimators=5, random_state=2).fit(X, y)
        assert model.rep_names_ == REPRESENTATIONS
        assert len(FEATURE_NAMES) == 7
        for intervals in model.intervals_:
            assert intervals
            for iv in intervals:
                assert iv.end > iv.start


class TestTreeArrays:
    def test_walker_matches_sklearn(self):
        rng = np.random.default_rng(16)
        feats = rng.normal(size=(120, 5))
        labels = (feats[:, 0] + feats[:, 3] > 0).astype(int)
        tree = DecisionTreeClassifier(random_state=0).fit(feats, labels)
        arrays = _tree_to_arrays(tree, 2)
        queries = rng.normal(size=(300, 5))
        assert np.array_equal(_tree_predict(arrays, queries), tree.predict(queries))

    def test_class_relabelling_respected(self):
        # train a tree on codes {1, 2} only; leaf classes must stay 1/2
        rng = np.random.default_rng(17)
        feats = rng.normal(size=(40, 3))
        labels = np.where(feats[:, 1] > 0, 2, 1)
        tree = DecisionTreeClassifier(random_state=0).fit(feats, labels)
        arrays = _tree_to_arrays(tree, 3)
        got = _tree_predict(arrays, feats)
        assert set(got) <= {1, 2}
        assert np.array_equal(got, tree.predict(feats))
