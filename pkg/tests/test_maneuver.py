"""Piecewise maneuver fitting: peak split, cubic rise, Hill decay,
extrapolation to a full expiration."""

import numpy as np
import pytest

from whistleflow.errors import EmptyCurve, FitDiverged
from whistleflow.maneuver import (
    FLAG_RISE_DEGENERATE,
    FLAG_RISE_LINEAR,
    FlowCurve,
    ManeuverFit,
    evaluate_fit,
    extrapolate,
    find_peak,
    fit_decay,
    fit_maneuver,
    fit_rise,
    hill_decay,
)
from whistleflow.synth import ReferenceProfile


def curve_of(times, flows, flags=()):
    return FlowCurve(times_s=np.asarray(times, dtype=float),
                     flows_lps=np.asarray(flows, dtype=float),
                     quality_flags=tuple(flags))


class TestFindPeak:
    def test_simple(self):
        assert find_peak(curve_of([0, 1, 2], [1, 3, 2])) == (1.0, 3.0)

    def test_constant_curve_takes_first(self):
        assert find_peak(curve_of([0, 1, 2], [2, 2, 2])) == (0.0, 2.0)

    def test_single_point(self):
        assert find_peak(curve_of([0.4], [1.5])) == (0.4, 1.5)

    def test_empty(self):
        with pytest.raises(EmptyCurve):
            find_peak(curve_of([], []))


class TestFitRise:
    def test_exact_cubic_recovered(self):
        t = np.linspace(0.0, 1.0, 12)
        y = 2.0 * t ** 3 - t ** 2 + 0.5 * t + 0.1
        coeffs, rms, flags = fit_rise(t, y)
        np.testing.assert_allclose(coeffs, [2.0, -1.0, 0.5, 0.1], atol=1e-6)
        assert rms < 1e-9
        assert flags == ()

    def test_constant_samples(self):
        coeffs, _, _ = fit_rise(np.linspace(0, 1, 8), np.full(8, 3.2))
        np.testing.assert_allclose(coeffs, [0.0, 0.0, 0.0, 3.2], atol=1e-12)

    def test_three_points_linear_fallback(self):
        coeffs, _, flags = fit_rise([0.0, 0.1, 0.2], [0.0, 1.0, 2.0])
        assert coeffs[0] == 0.0 and coeffs[1] == 0.0
        assert coeffs[2] == pytest.approx(10.0)
        assert FLAG_RISE_LINEAR in flags

    def test_single_point_degenerate(self):
        coeffs, _, flags = fit_rise([0.1], [2.5])
        np.testing.assert_allclose(coeffs, [0, 0, 0, 2.5])
        assert FLAG_RISE_DEGENERATE in flags

    def test_four_points_interpolate(self):
        rng = np.random.default_rng(30)
        for _ in range(10):
            t = np.sort(rng.uniform(0, 1, 4))
            y = rng.uniform(0, 8, 4)
            coeffs, rms, _ = fit_rise(t, y)
            np.testing.assert_allclose(np.polyval(coeffs, t), y, atol=1e-9)


class TestHillDecay:
    def test_value_at_peak_is_c(self):
        assert hill_decay(0.0, 3.0, 0.8, 8.0) == pytest.approx(8.0)

    def test_half_decay_definition(self):
        assert hill_decay(0.8, 3.0, 0.8, 8.0) == pytest.approx(4.0)

    def test_strictly_decreasing(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            a = rng.uniform(1.0, 5.0)
            b = rng.uniform(0.2, 2.0)
            c = rng.uniform(1.0, 10.0)
            tau = np.linspace(0.0, 6 * b, 500)
            vals = hill_decay(tau, a, b, c)
            assert np.all(np.diff(vals) < 0.0)


class TestFitDecay:
    def test_recovery_with_one_percent_noise(self):
        rng = np.random.default_rng(32)
        tau = np.linspace(0.0, 4.0, 200)
        truth = hill_decay(tau, 3.0, 0.8, 8.0)
        y = truth * (1.0 + 0.01 * rng.standard_normal(tau.size))
        (a, b, c), rms = fit_decay(tau, y, 0.0, float(y.max()))
        assert abs(a - 3.0) / 3.0 <= 0.02
        assert abs(b - 0.8) / 0.8 <= 0.02
        assert abs(c - 8.0) / 8.0 <= 0.02

    def test_exact_data_recovered_tightly(self):
        tau = np.linspace(0.0, 3.0, 80)
        y = hill_decay(tau, 2.2, 0.6, 5.0)
        (a, b, c), rms = fit_decay(tau, y, 0.0, 5.0)
        assert abs(a - 2.2) < 1e-6
        assert abs(b - 0.6) < 1e-6
        assert abs(c - 5.0) < 1e-6
        assert rms < 1e-8

    def test_too_few_points(self):
        with pytest.raises(FitDiverged):
            fit_decay([0.0, 0.1], [5.0, 4.0], 0.0, 5.0)

    def test_nonpositive_peak(self):
        with pytest.raises(FitDiverged):
            fit_decay([0.0, 0.1, 0.2], [0.0, 0.0, 0.0], 0.0, 0.0)


def reference_fit():
    """ManeuverFit with hand-picked, mutually consistent pieces."""
    return ManeuverFit(
        t0_s=0.0,
        linear_slope_lps_per_s=20.0,
        cubic=(0.0, 0.0, 20.0, 0.0),        # linear ramp reaching 5 at 0.25 s
        hill=(3.0, 0.8, 5.0),
        t_peak_s=0.25,
        t_end_s=0.25 + 0.8 * 199.0 ** (1.0 / 3.0),
        rise_start_s=0.05,
        rise_residual_rms=0.0,
        decay_residual_rms=0.0,
        junction_gap_lps=0.0,
    )


class TestExtrapolate:
    def test_origin_segment_is_line_through_zero(self):
        fit = reference_fit()
        curve = extrapolate(fit, 0.005)
        seg = curve.times_s <= 0.05
        np.testing.assert_allclose(curve.flows_lps[seg],
                                   20.0 * curve.times_s[seg], atol=1e-12)

    def test_tail_termination_time_analytic(self):
        # flow = 0.5% of peak at tau = b * 199^(1/a); bisection cross-check
        a, b, c = 3.0, 0.8, 8.0
        lo, hi = 0.0, 100.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if hill_decay(mid, a, b, c) > 0.005 * c:
                lo = mid
            else:
                hi = mid
        analytic = b * 199.0 ** (1.0 / a)
        assert analytic == pytest.approx(0.5 * (lo + hi), abs=1e-9)
        assert analytic == pytest.approx(4.67, abs=0.01)

        t = np.linspace(0.4, 4.0, 80)
        flows = hill_decay(t - 0.4, a, b, c)
        rise_t = np.array([0.1, 0.2, 0.3, 0.4])
        rise_f = 8.0 * (rise_t / 0.4) ** 2
        curve = curve_of(np.concatenate([rise_t[:-1], t]),
                         np.concatenate([rise_f[:-1], flows]))
        fit = fit_maneuver(curve)
        assert fit.t_end_s - fit.t_peak_s == pytest.approx(analytic, rel=1e-3)

    def test_junction_gap_within_tolerance(self):
        fit = reference_fit()
        gap = abs(np.polyval(fit.cubic, fit.t_peak_s) - fit.hill[2])
        assert gap <= 0.02 * fit.hill[2]

    def test_non_negative_everywhere(self):
        rng = np.random.default_rng(33)
        for _ in range(10):
            prof = ReferenceProfile(
                pefr_lps=rng.uniform(3, 10), t_peak_s=rng.uniform(0.05, 0.4),
                steepness=rng.uniform(1.5, 4), half_decay_s=rng.uniform(0.3, 1.5),
                duration_s=6.0)
            fit = fit_maneuver(prof.sample(0.02))
            curve = extrapolate(fit, 0.002)
            assert np.all(curve.flows_lps >= 0.0)

    def test_uniform_grid_spans_end(self):
        fit = reference_fit()
        curve = extrapolate(fit, 0.001)
        steps = np.diff(curve.times_s)
        np.testing.assert_allclose(steps, steps[0], rtol=1e-9)
        assert curve.times_s[-1] == pytest.approx(fit.t_end_s, abs=1e-9)

    def test_refit_reproduces_hill_parameters(self):
        fit = reference_fit()
        curve = extrapolate(fit, 0.01)
        decay = curve.times_s >= fit.t_peak_s
        (a, b, c), _ = fit_decay(curve.times_s[decay], curve.flows_lps[decay],
                                 fit.t_peak_s, fit.hill[2])
        assert abs(a - fit.hill[0]) / fit.hill[0] <= 0.01
        assert abs(b - fit.hill[1]) / fit.hill[1] <= 0.01
        assert abs(c - fit.hill[2]) / fit.hill[2] <= 0.01


class TestFitManeuver:
    def test_reference_profile_recovered(self):
        prof = ReferenceProfile(pefr_lps=8.0, t_peak_s=0.3, steepness=3.0,
                                half_decay_s=0.8, duration_s=6.0)
        fit = fit_maneuver(prof.sample(0.01))
        assert fit.t_peak_s == pytest.approx(0.3, abs=0.011)
        assert fit.hill[2] == pytest.approx(8.0, rel=0.01)
        assert fit.hill[1] == pytest.approx(0.8, rel=0.02)
        assert fit.t0_s <= fit.rise_start_s <= fit.t_peak_s < fit.t_end_s

    def test_onset_zero_crossing(self):
        # rise sampled from flow = 20*(t - 0.1): zero crossing at t0 = 0.1
        t = 0.15 + 0.05 * np.arange(6)          # 0.15 .. 0.40
        rise = 20.0 * (t - 0.1)
        decay_t = 0.45 + 0.05 * np.arange(50)   # 0.45 .. 2.90
        decay = hill_decay(decay_t - 0.4, 2.0, 0.5, 20.0 * 0.3)
        curve = curve_of(np.concatenate([t, decay_t]),
                         np.concatenate([rise, decay]))
        fit = fit_maneuver(curve)
        assert fit.t0_s == pytest.approx(0.1, abs=0.01)

    def test_fit_log_records_decay_form(self):
        prof = ReferenceProfile(pefr_lps=6.0, t_peak_s=0.2, steepness=2.5,
                                half_decay_s=0.7, duration_s=5.0)
        fit = fit_maneuver(prof.sample(0.01))
        assert any("half_time" in line for line in fit.fit_log)

    def test_maneuver_fit_validates_ordering(self):
        with pytest.raises(ValueError):
            ManeuverFit(t0_s=1.0, linear_slope_lps_per_s=1.0,
                        cubic=(0, 0, 1, 0), hill=(2.0, 0.5, 5.0),
                        t_peak_s=0.5, t_end_s=2.0, rise_start_s=0.2,
                        rise_residual_rms=0.0, decay_residual_rms=0.0,
                        junction_gap_lps=0.0)

    def test_evaluate_outside_span_is_zero(self):
        fit = reference_fit()
        vals = evaluate_fit(fit, np.array([-1.0]))
        assert vals[0] == 0.0
