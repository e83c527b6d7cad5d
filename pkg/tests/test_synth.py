"""Synthetic whistle oracle: profiles, chirp synthesis, determinism."""

import numpy as np
import pytest

from whistleflow.audio import encode_wav_pcm16
from whistleflow.calibration import CalibrationModel
from whistleflow.errors import FrequencyAboveNyquist, InvalidParams
from whistleflow.maneuver import FlowCurve
from whistleflow.spectral import stft
from whistleflow.synth import (
    AMPLITUDE_CONSTANT,
    AMPLITUDE_PROPORTIONAL,
    ReferenceProfile,
    SynthProfile,
    reference_flow_profile,
    synthesize_whistle,
)

CAL = CalibrationModel(slope_hz_per_lps=400.0, intercept_hz=200.0,
                       r_squared=1.0, residual_std_hz=0.0,
                       flow_range_lps=(0.0, 10.0),
                       device_profile_id="synthetic")


class TestReferenceProfile:
    profile = ReferenceProfile(pefr_lps=8.0, t_peak_s=0.1, steepness=3.0,
                               half_decay_s=0.8, duration_s=6.0)

    def test_peak_location_and_value(self):
        curve = self.profile.sample(0.001)
        i = np.argmax(curve.flows_lps)
        assert curve.flows_lps[i] == pytest.approx(8.0, abs=1e-9)
        assert curve.times_s[i] == pytest.approx(0.1, abs=1e-9)

    def test_half_decay_value(self):
        assert self.profile.flow_at(0.1 + 0.8) == pytest.approx(4.0, abs=1e-9)

    def test_starts_at_zero(self):
        assert self.profile.flow_at(0.0) == 0.0

    def test_fvc_against_dense_trapezoid_oracle(self):
        t = np.linspace(0.0, 6.0, 600001)
        oracle = np.trapezoid(self.profile.flow_at(t), t)
        assert self.profile.fvc_l() == pytest.approx(oracle, rel=1e-6)

    def test_fev1_against_dense_trapezoid_oracle(self):
        t = np.linspace(0.0, 1.0, 200001)
        oracle = np.trapezoid(self.profile.flow_at(t), t)
        assert self.profile.fev1_l() == pytest.approx(oracle, rel=1e-6)

    def test_invalid_params(self):
        with pytest.raises(InvalidParams):
            ReferenceProfile(-1.0, 0.1, 3.0, 0.8, 6.0)
        with pytest.raises(InvalidParams):
            ReferenceProfile(8.0, 7.0, 3.0, 0.8, 6.0)  # peak after end

    def test_reference_flow_profile_function(self):
        curve = reference_flow_profile(8.0, 0.1, 3.0, 0.8, 6.0)
        assert isinstance(curve, FlowCurve)
        assert curve.flows_lps.max() == pytest.approx(8.0, abs=1e-9)


def constant_flow_curve(flow=2.0, seconds=2.0):
    return FlowCurve(times_s=np.array([0.0, seconds]),
                     flows_lps=np.array([flow, flow]))


class TestSynthesize:
    def test_constant_flow_dominant_bin(self):
        synth = SynthProfile(flow_curve=constant_flow_curve(2.0),
                             calibration=CAL, snr_db=60.0,
                             amplitude_model=AMPLITUDE_CONSTANT)
        clip = synthesize_whistle(synth, 44100, seed=1)
        spec = stft(clip, 2048, 512)
        peaks = spec.bin_freqs_hz[np.argmax(spec.magnitudes, axis=1)]
        assert np.all(np.abs(peaks[spec.complete] - 1000.0) <= 44100 / 2048)

    def test_nyquist_guard(self):
        synth = SynthProfile(flow_curve=constant_flow_curve(74.0),
                             calibration=CAL, snr_db=60.0)
        with pytest.raises(FrequencyAboveNyquist):
            synthesize_whistle(synth, 44100, seed=1)

    def test_deterministic_given_seed(self):
        profile = ReferenceProfile(6.0, 0.2, 2.5, 0.7, 4.0)
        synth = SynthProfile(flow_curve=profile.sample(), calibration=CAL,
                             snr_db=30.0)
        a = synthesize_whistle(synth, 44100, seed=9)
        b = synthesize_whistle(synth, 44100, seed=9)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert encode_wav_pcm16(a.samples, 44100) == \
            encode_wav_pcm16(b.samples, 44100)

    def test_different_seeds_differ(self):
        profile = ReferenceProfile(6.0, 0.2, 2.5, 0.7, 4.0)
        synth = SynthProfile(flow_curve=profile.sample(), calibration=CAL,
                             snr_db=30.0)
        a = synthesize_whistle(synth, 44100, seed=1)
        b = synthesize_whistle(synth, 44100, seed=2)
        assert not np.array_equal(a.samples, b.samples)

    def test_proportional_amplitude_tracks_flow(self):
        profile = ReferenceProfile(6.0, 0.3, 2.5, 0.7, 4.0)
        synth = SynthProfile(flow_curve=profile.sample(), calibration=CAL,
                             snr_db=80.0,
                             amplitude_model=AMPLITUDE_PROPORTIONAL)
        clip = synthesize_whistle(synth, 44100, seed=3)
        fs = 44100
        # envelope near the peak vs at 2x half-decay into the tail
        peak_seg = clip.samples[int(0.28 * fs):int(0.32 * fs)]
        tail_seg = clip.samples[int(1.6 * fs):int(1.75 * fs)]
        ratio = np.abs(tail_seg).max() / np.abs(peak_seg).max()
        expected = profile.flow_at(1.7) / 6.0
        assert ratio == pytest.approx(expected, abs=0.05)

    def test_snr_definition(self):
        # measured SNR over the span must match the request within ~1 dB
        profile = ReferenceProfile(6.0, 0.3, 2.5, 0.7, 4.0)
        synth = SynthProfile(flow_curve=profile.sample(), calibration=CAL,
                             snr_db=20.0, amplitude_model=AMPLITUDE_CONSTANT)
        clean = synthesize_whistle(
            SynthProfile(flow_curve=profile.sample(), calibration=CAL,
                         snr_db=300.0, amplitude_model=AMPLITUDE_CONSTANT),
            44100, seed=4)
        noisy = synthesize_whistle(synth, 44100, seed=4)
        noise = noisy.samples - clean.samples
        snr = 10 * np.log10(np.mean(clean.samples ** 2) /
                            np.mean(noise ** 2))
        assert snr == pytest.approx(20.0, abs=1.0)

    def test_invalid_amplitude_model(self):
        with pytest.raises(InvalidParams):
            SynthProfile(flow_curve=constant_flow_curve(), calibration=CAL,
                         snr_db=30.0, amplitude_model="loudness")

    def test_non_finite_snr_rejected(self):
        with pytest.raises(InvalidParams):
            SynthProfile(flow_curve=constant_flow_curve(), calibration=CAL,
                         snr_db=float("inf"))
