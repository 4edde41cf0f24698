import math

import numpy as np
import pytest
from scipy import stats

from kpilab.series import TimeSeries
from kpilab.simulate import (
    BALANCED_PROPORTIONS,
    EDGE_MARGIN,
    HALF_WINDOW_RANGES,
    IMBALANCED_PROPORTIONS,
    MIN_SPAN,
    SUBCLASSES,
    AnomalyRecord,
    BaseSignalParams,
    SimConfig,
    add_noise,
    base_signal,
    daily_amplitude,
    draw_hat_params,
    inject,
    plan_windows,
    simulate,
)


def high_precision_base(t: float) -> float:
    # independent evaluation of the three-sinusoid product
    out = 1.0
    for a, period, mu in ((0.5, 1440.0, 0.5), (0.1, 10080.0, 0.9), (0.05, 40320.0, 0.95)):
        out *= a * math.sin(2.0 * math.pi * t / period) + mu
    return out


class TestBaseSignal:
    def test_known_values(self):
        assert base_signal(0.0) == pytest.approx(0.4275, abs=1e-12)
        # frozen from a 30-digit evaluation of the closed form
        assert base_signal(360.0) == pytest.approx(0.878725043092956339, rel=1e-12)

    def test_matches_independent_evaluation(self):
        rng = np.random.default_rng(11)
        for t in rng.uniform(0, 40320 * 3, size=200):
            assert base_signal(float(t)) == pytest.approx(high_precision_base(float(t)), rel=1e-9)

    def test_bounds(self):
        t = np.arange(0, 40320 * 2, 7.0)
        vals = base_signal(t)
        assert np.all(vals >= 0.0) and np.all(vals <= 1.0)

    def test_component_sums_validated(self):
        with pytest.raises(ValueError):
            BaseSignalParams(amplitudes=(0.5, 0.1, 0.05), means=(0.6, 0.9, 0.95))


class TestPlanWindows:
    def test_layout_and_constraints(self):
        cfg = SimConfig(n=200, ts=5, seed=4)
        records = plan_windows(cfg)
        offset = 0
        for rec in records:
            assert rec.i_w == offset
            offset += rec.window_len
            lo, hi = HALF_WINDOW_RANGES[rec.anomaly_class]
            assert 2 * lo <= rec.window_len <= 2 * hi
            assert rec.i_w <= rec.i_a
            assert rec.i_a + rec.length <= rec.i_w + rec.window_len - EDGE_MARGIN
            assert rec.length >= MIN_SPAN[rec.anomaly_class]
            if rec.anomaly_class == "single_point":
                assert rec.length == 1

    def test_subclass_frequencies_chi_square(self):
        cfg = SimConfig(n=10000, ts=5, proportions=dict(IMBALANCED_PROPORTIONS), seed=9)
        records = plan_windows(cfg)
        counts = {name: 0 for name in SUBCLASSES}
        for rec in records:
            counts[rec.subclass] += 1
        observed = [counts[name] for name in SUBCLASSES]
        expected = [IMBALANCED_PROPORTIONS[name] * cfg.n for name in SUBCLASSES]
        result = stats.chisquare(observed, expected)
        assert result.pvalue > 1e-3

    def test_single_subclass_proportions(self):
        cfg = SimConfig(n=20, proportions={"level_shift_growth": 1.0}, seed=0)
        records = plan_windows(cfg)
        assert all(rec.subclass == "level_shift_growth" for rec in records)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(n=0)
        with pytest.raises(ValueError):
            SimConfig(n=1, ts=7)  # 7 does not divide a day
        with pytest.raises(ValueError):
            SimConfig(n=1, proportions={"single_point_peak": 0.5})
        with pytest.raises(ValueError):
            SimConfig(n=1, proportions={"not_a_class": 1.0})
        with pytest.raises(ValueError):
            SimConfig(n=1, noise_sigma=-0.1)


class TestDailyAmplitude:
    def test_constant_day(self):
        x = TimeSeries(np.ones(288 * 2), ts=5)
        assert daily_amplitude(x, 100) == 0.0

    def test_pure_daily_sine(self):
        t = np.arange(288 * 3) * 5.0
        x = TimeSeries(np.sin(2 * np.pi * t / 1440.0), ts=5)
        # the 5-minute grid hits both extremes of the daily sine exactly
        assert daily_amplitude(x, 300) == pytest.approx(2.0, abs=1e-12)

    def test_matches_bruteforce_max_min(self):
        t = np.arange(288 * 4) * 5.0
        x = TimeSeries(base_signal(t), ts=5)
        for i in (0, 287, 288, 800, 1151):
            day = i // 288
            seg = x.values[day * 288 : (day + 1) * 288]
            assert daily_amplitude(x, i) == pytest.approx(float(seg.max() - seg.min()), abs=0)

    def test_incomplete_day_rejected(self):
        x = TimeSeries(np.ones(100), ts=5)  # less than one day
        with pytest.raises(ValueError):
            daily_amplitude(x, 10)


def _record(subclass, i_a, length, alpha, window_pad=50, breakpoints=None, alphas=None):
    i_w = max(0, i_a - 5)
    window_len = (i_a - i_w) + length + EDGE_MARGIN + window_pad
    return AnomalyRecord(
        subclass=subclass,
        i_w=i_w,
        window_len=window_len,
        i_a=i_a,
        length=length,
        alpha=alpha,
        breakpoints=breakpoints,
        alphas=alphas,
    )


class TestInject:
    def setup_method(self):
        self.x = TimeSeries(np.full(400, 2.0), ts=5)

    def test_single_point_peak_and_dip(self):
        peak = inject(self.x, _record("single_point_peak", 100, 1, 0.6))
        assert peak.values[100] == pytest.approx(2.6, abs=0)
        dip = inject(self.x, _record("single_point_dip", 100, 1, 0.6))
        assert dip.values[100] == pytest.approx(1.4, abs=0)
        untouched = np.delete(peak.values, 100)
        assert np.array_equal(untouched, np.delete(self.x.values, 100))

    def test_hat_breakpoint_identities(self):
        rec = _record(
            "temporary_change_growth", 50, 40, 0.5, breakpoints=(60, 75), alphas=(0.5, 0.41)
        )
        zero = TimeSeries(np.zeros(400), ts=5)
        offsets = inject(zero, rec).values  # base 0: values are the raw offsets
        assert offsets[50] == 0.0
        assert offsets[90] == 0.0
        assert offsets[60] == pytest.approx(0.5, abs=0)
        assert offsets[75] == pytest.approx(0.41, abs=0)
        # exact linear interpolation between breakpoints
        assert offsets[55] == pytest.approx(0.25, abs=1e-12)
        assert offsets[67] == pytest.approx(0.5 + (67 - 60) * (0.41 - 0.5) / 15, abs=1e-12)
        assert np.all(offsets[:50] == 0) and np.all(offsets[91:] == 0)

    def test_hat_continuity(self):
        rec = _record(
            "temporary_change_decrease", 30, 20, 0.6, breakpoints=(35, 42), alphas=(0.45, 0.6)
        )
        offsets = inject(self.x, rec).values - self.x.values
        segment = offsets[30:51]
        steps = np.abs(np.diff(segment))
        assert np.all(steps <= 0.6 / 2 + 1e-9)  # no jumps beyond one linear step

    def test_level_shift_equals_forced_temporary_change(self):
        ls = _record("level_shift_growth", 60, 30, 0.55, breakpoints=(70, 80))
        tc = _record(
            "temporary_change_growth", 60, 30, 0.55, breakpoints=(70, 80), alphas=(0.55, 0.55)
        )
        out_ls = inject(self.x, ls)
        out_tc = inject(self.x, tc)
        assert np.array_equal(out_ls.values, out_tc.values)
        # plateau between the knees sits at alpha exactly
        assert np.all(out_ls.values[70:81] == pytest.approx(2.55, abs=1e-12))

    def test_variation_change_scales_inclusive_span(self):
        base = TimeSeries(np.linspace(1.0, 3.0, 400), ts=5)
        rec = _record("variation_change_growth", 100, 20, 0.4)
        out = inject(base, rec)
        seg = slice(100, 121)
        assert np.allclose(out.values[seg], base.values[seg] * 1.4, rtol=1e-12)
        rest = np.ones(400, dtype=bool)
        rest[seg] = False
        assert np.array_equal(out.values[rest], base.values[rest])
        down = inject(base, _record("variation_change_decrease", 100, 20, 0.4))
        assert np.allclose(down.values[seg], base.values[seg] * 0.6, rtol=1e-12)

    def test_draw_hat_params_ordering(self):
        rng = np.random.default_rng(21)
        for _ in range(300):
            length = int(rng.integers(3, 50))
            rec = _record("temporary_change_growth", 40, length, 0.5)
            done = draw_hat_params(rec, rng)
            i_b, i_c = done.breakpoints
            assert rec.i_a < i_b < i_c < rec.i_a + length
            assert i_b <= rec.i_a + length // 2
            a1, a2 = done.alphas
            assert 0.5 in (a1, a2)
            other = a1 if a2 == 0.5 else a2
            assert min(0.4, 0.5) <= other <= 0.5

    def test_alpha_required(self):
        rec = _record("single_point_peak", 100, 1, None)
        with pytest.raises(ValueError):
            inject(self.x, rec)


class TestRecordValidation:
    def test_span_must_respect_margin(self):
        with pytest.raises(ValueError):
            AnomalyRecord("single_point_peak", 0, 10, 6, 1)  # 6+1 > 10-5
        with pytest.raises(ValueError):
            AnomalyRecord("temporary_change_growth", 0, 20, 0, 16)

    def test_single_point_length_one(self):
        with pytest.raises(ValueError):
            AnomalyRecord("single_point_peak", 0, 100, 10, 3)

    def test_breakpoints_strictly_interior(self):
        with pytest.raises(ValueError):
            AnomalyRecord("level_shift_growth", 0, 100, 10, 20, breakpoints=(10, 15))
        with pytest.raises(ValueError):
            AnomalyRecord("level_shift_growth", 0, 100, 10, 20, breakpoints=(15, 30))

    def test_round_trip_dict(self):
        rec = AnomalyRecord(
            "temporary_change_growth", 0, 100, 10, 20, alpha=0.5, breakpoints=(15, 25), alphas=(0.5, 0.44)
        )
        assert AnomalyRecord.from_dict(rec.to_dict()) == rec


class TestAddNoise:
    def setup_method(self):
        t = np.arange(288 * 8) * 5.0
        self.base = TimeSeries(base_signal(t), ts=5)

    def test_sigma_zero_is_identity(self):
        rng = np.random.default_rng(0)
        out = add_noise(self.base, self.base, [], 0.0, rng)
        assert np.array_equal(out.values, self.base.values)

    def test_clipping_bound(self):
        rng = np.random.default_rng(5)
        sigma = 0.05
        out = add_noise(self.base, self.base, [], sigma, rng)
        bound = self.base.values * 4 * 2.31 * sigma
        assert np.all(np.abs(out.values - self.base.values) <= bound + 1e-15)

    def test_exemption_spans_stay_clean(self):
        records = [
            _record("single_point_peak", 500, 1, 0.5),
            _record("temporary_change_growth", 900, 40, 0.5, breakpoints=(910, 920), alphas=(0.5, 0.45)),
            _record("level_shift_growth", 1500, 40, 0.5, breakpoints=(1510, 1520)),
        ]
        rng = np.random.default_rng(6)
        out = add_noise(self.base, self.base, records, 0.08, rng)
        diff = out.values - self.base.values
        assert np.all(diff[500:502] == 0)  # single point span
        assert np.all(diff[900:941] == 0)  # temporary change span
        assert np.any(diff[1500:1541] != 0)  # level shifts are not exempt
        outside = np.abs(diff[:500])
        assert np.count_nonzero(outside) > 450

    def test_noise_scale_factor(self):
        # frozen contract: the drawn std is 2.31 * sigma before clipping
        flat = TimeSeries(np.ones(100000), ts=5)
        rng = np.random.default_rng(12)
        out = add_noise(flat, flat, [], 0.02, rng)
        measured = np.std(out.values - flat.values)
        assert measured == pytest.approx(2.31 * 0.02, rel=0.02)


class TestSimulate:
    def test_shapes_and_determinism(self):
        cfg = SimConfig(n=12, ts=5, noise_sigma=0.02, seed=42)
        series_a, records_a = simulate(cfg)
        series_b, records_b = simulate(cfg)
        assert np.array_equal(series_a.values, series_b.values)
        assert records_a == records_b
        assert len(series_a) == sum(rec.window_len for rec in records_a)
        assert series_a.t0 == 0 and series_a.ts == 5

    def test_alpha_ratio_in_strength_range(self):
        cfg = SimConfig(n=40, ts=5, seed=3)
        _, records = simulate(cfg)
        t = np.arange((max(r.i_w + r.window_len for r in records) // 288 + 1) * 288) * 5.0
        base = TimeSeries(base_signal(t), ts=5)
        for rec in records:
            amp = daily_amplitude(base, rec.i_a)
            assert 0.5 - 1e-9 <= rec.alpha / amp <= 0.7 + 1e-9

    def test_noise_free_simulation_bounded(self):
        cfg = SimConfig(n=10, ts=5, noise_sigma=0.0, seed=8)
        series, _ = simulate(cfg)
        assert series.values.min() == pytest.approx(0.02)
        assert series.values.max() == pytest.approx(1.0)

    def test_imbalanced_frequencies_within_multinomial_ci(self):
        cfg = SimConfig(n=1000, ts=5, proportions=dict(IMBALANCED_PROPORTIONS), seed=17)
        _, records = simulate(cfg)
        counts = {name: 0 for name in SUBCLASSES}
        for rec in records:
            counts[rec.subclass] += 1
        z = 2.576  # 99% two-sided normal bound
        for name in SUBCLASSES:
            p = IMBALANCED_PROPORTIONS[name]
            bound = z * math.sqrt(p * (1 - p) / cfg.n)
            assert abs(counts[name] / cfg.n - p) <= bound, name

    def test_balanced_default(self):
        assert sum(BALANCED_PROPORTIONS.values()) == pytest.approx(1.0)
        assert sum(IMBALANCED_PROPORTIONS.values()) == pytest.approx(1.0)
