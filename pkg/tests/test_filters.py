"""Native spline and Butterworth primitives against independent reference
implementations (scipy) and analytic facts."""

import numpy as np
import pytest
from scipy import signal as scipy_signal
from scipy.interpolate import CubicSpline

from regait.errors import EmptySeriesError
from regait.filters import (
    NaturalCubicSpline,
    butterworth_sos,
    fill_gaps,
    lowpass,
    sosfilt,
)

FS = 30.0


def steady_amplitude(y, fs, freq):
    """Peak amplitude of a sinusoid from its analytic envelope over the
    steady-state middle of the series."""
    n = len(y)
    mid = y[n // 4 : 3 * n // 4]
    t = np.arange(len(mid)) / fs
    c = mid * np.cos(2 * np.pi * freq * t)
    s = mid * np.sin(2 * np.pi * freq * t)
    return 2.0 * np.hypot(c.mean(), s.mean())


class TestSpline:
    def test_matches_scipy_natural_on_random_knots(self):
        rng = np.random.default_rng(1)
        t = np.sort(rng.uniform(0, 100, 40))
        t += np.arange(40) * 1e-3  # ensure strictly increasing
        y = rng.normal(size=40)
        mine = NaturalCubicSpline(t, y)
        ref = CubicSpline(t, y, bc_type="natural")
        q = np.linspace(t[0], t[-1], 500)
        assert np.max(np.abs(mine(q) - ref(q))) < 1e-9

    def test_reproduces_linear_exactly(self):
        t = np.arange(20.0)
        y = 2.0 * t + 1.0
        spline = NaturalCubicSpline(t, y)
        q = np.linspace(0, 19, 101)
        assert np.max(np.abs(spline(q) - (2 * q + 1))) < 1e-9

    def test_interpolates_knots_exactly(self):
        rng = np.random.default_rng(2)
        t = np.arange(10.0)
        y = rng.normal(size=10)
        spline = NaturalCubicSpline(t, y)
        assert np.max(np.abs(spline(t) - y)) < 1e-12

    def test_needs_two_knots(self):
        with pytest.raises(EmptySeriesError):
            NaturalCubicSpline(np.array([1.0]), np.array([2.0]))


class TestFillGaps:
    def test_linear_gap_filled_exactly(self):
        t = np.arange(30.0)
        y = 2.0 * t + 1.0
        valid = np.ones(30, bool)
        valid[4:7] = False
        filled, mask = fill_gaps(np.where(valid, y, 0.0), valid, max_gap=15)
        assert np.max(np.abs(filled[4:7] - y[4:7])) < 1e-9
        assert list(np.flatnonzero(mask)) == [4, 5, 6]

    def test_sine_gap_matches_independent_oracle(self):
        # Expected values computed with scipy's natural spline (independent
        # implementation); a cubic bridging 10 frames of a unit 1 Hz sine at
        # 30 fps has an approximation floor near 0.08 against the true sine,
        # so the true-sine bound below is the oracle-measured one.
        y = np.sin(2 * np.pi * np.arange(180) / FS)
        valid = np.ones(180, bool)
        valid[80:90] = False
        filled, mask = fill_gaps(np.where(valid, y, 0.0), valid, max_gap=15)
        oracle = CubicSpline(np.arange(180)[valid], y[valid], bc_type="natural")
        gap = np.arange(80, 90)
        assert np.max(np.abs(filled[gap] - oracle(gap))) < 1e-9
        assert np.max(np.abs(filled[gap] - y[gap])) < 0.08

    def test_leading_and_trailing_gaps_not_filled(self):
        y = np.arange(20.0)
        valid = np.ones(20, bool)
        valid[:3] = False
        valid[-2:] = False
        filled, mask = fill_gaps(y, valid, max_gap=15)
        assert not mask[:3].any() and not mask[-2:].any()

    def test_gap_longer_than_max_left_invalid(self):
        valid = np.ones(40, bool)
        valid[10:26] = False  # 16-frame gap
        _, mask = fill_gaps(np.arange(40.0), valid, max_gap=15)
        assert not mask.any()

    def test_valid_samples_bit_identical(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=50)
        valid = np.ones(50, bool)
        valid[20:24] = False
        filled, _ = fill_gaps(y.copy(), valid, max_gap=10)
        assert np.array_equal(filled[valid], y[valid])

    def test_under_four_valid_samples_raises(self):
        valid = np.zeros(10, bool)
        valid[[0, 5, 9]] = True
        with pytest.raises(EmptySeriesError):
            fill_gaps(np.arange(10.0), valid, max_gap=5)


class TestButterworthDesign:
    def test_sections_match_scipy_poles(self):
        mine = butterworth_sos(4, 6.0, FS)
        ref = scipy_signal.butter(4, 6.0, fs=FS, output="sos")
        # Same pole pairs (denominators), possibly different section order.
        mine_dens = sorted(tuple(np.round(s[4:], 12)) for s in mine)
        ref_dens = sorted(tuple(np.round(s[4:], 12)) for s in ref)
        assert mine_dens == ref_dens

    def test_frequency_response_pins(self):
        sos = butterworth_sos(4, 6.0, FS)

        def gain(freq_hz):
            z = np.exp(1j * 2 * np.pi * freq_hz / FS)
            h = 1.0 + 0j
            for b0, b1, b2, _, a1, a2 in sos:
                h *= (b0 + b1 / z + b2 / z**2) / (1 + a1 / z + a2 / z**2)
            return abs(h)

        assert gain(0.0) == pytest.approx(1.0, abs=1e-12)
        assert gain(6.0) == pytest.approx(2**-0.5, abs=1e-9)
        assert gain(15.0) < 1e-12

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            butterworth_sos(3, 6.0, FS)
        with pytest.raises(ValueError):
            butterworth_sos(4, 15.0, FS)
        with pytest.raises(ValueError):
            butterworth_sos(4, 0.0, FS)


class TestLowpass:
    def test_constant_series_unchanged(self):
        for zero_phase in (True, False):
            out = lowpass(np.full(60, 3.7), FS, 6.0, 4, zero_phase)
            assert np.max(np.abs(out - 3.7)) < 1e-9

    def test_single_pass_gain_at_cutoff(self):
        t = np.arange(3000) / FS
        x = np.sin(2 * np.pi * 6.0 * t)
        y = lowpass(x, FS, 6.0, 4, zero_phase=False)
        assert steady_amplitude(y, FS, 6.0) == pytest.approx(2**-0.5, abs=1e-3)

    def test_nyquist_sinusoid_annihilated(self):
        # All four bilinear zeros sit at z = -1, so the steady-state response
        # is exactly zero; skip the decaying start-up transient.
        x = np.cos(np.pi * np.arange(400))  # 15 Hz at fs=30
        y = lowpass(x, FS, 6.0, 4, zero_phase=False)
        assert np.max(np.abs(y[100:])) < 1e-9

    def test_zero_phase_has_no_lag(self):
        t = np.arange(600) / FS
        x = np.sin(2 * np.pi * 1.0 * t) + 0.4 * np.sin(2 * np.pi * 3.0 * t)
        y = lowpass(x, FS, 6.0, 4, zero_phase=True)
        lags = np.arange(-15, 16)
        xc = [np.dot(y[15:-15], x[15 + k : len(x) - 15 + k]) for k in lags]
        assert lags[int(np.argmax(xc))] == 0

    def test_linearity(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=200)
        y = rng.normal(size=200)
        a, b = 2.5, -1.25
        lhs = lowpass(a * x + b * y, FS, 6.0)
        rhs = a * lowpass(x, FS, 6.0) + b * lowpass(y, FS, 6.0)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_matches_scipy_sosfiltfilt(self):
        rng = np.random.default_rng(5)
        x = np.cumsum(rng.normal(size=400)) / 10.0
        mine = lowpass(x, FS, 6.0, 4, zero_phase=True)
        ref = scipy_signal.sosfiltfilt(
            scipy_signal.butter(4, 6.0, fs=FS, output="sos"),
            x, padtype="odd", padlen=12,
        )
        assert np.max(np.abs(mine - ref)) < 1e-9

    def test_series_shorter_than_padding_rejected(self):
        with pytest.raises(EmptySeriesError):
            lowpass(np.zeros(12), FS, 6.0, 4, zero_phase=True)

    def test_single_pass_matches_scipy_sosfilt_steady_state(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=300) + 5.0
        sos_ref = scipy_signal.butter(4, 6.0, fs=FS, output="sos")
        zi = scipy_signal.sosfilt_zi(sos_ref) * x[0]
        ref, _ = scipy_signal.sosfilt(sos_ref, x, zi=zi)
        mine = lowpass(x, FS, 6.0, 4, zero_phase=False)
        assert np.max(np.abs(mine - ref)) < 1e-9
