"""Synthetic whistle generator: ground-truth flow profiles and their audio.

This is the independent end of the verification loop: a known flow profile
is turned into a phase-continuous chirp whose instantaneous frequency
follows the calibration line, optionally buried in seeded white noise.
Running the analysis pipeline over that audio must recover the profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .audio import AudioClip
from .calibration import CalibrationModel
from .errors import FrequencyAboveNyquist, InvalidParams
from .maneuver import FlowCurve, hill_decay

AMPLITUDE_CONSTANT = "constant"
AMPLITUDE_PROPORTIONAL = "proportional-to-flow"


@dataclass(frozen=True)
class ReferenceProfile:
    """Analytic flow profile: smooth cubic rise, Hill decay.

    flow(0) = 0, flow(t_peak) = pefr with zero slope on both sides of the
    peak, flow(t_peak + half_decay) = pefr / 2.
    """

    pefr_lps: float
    t_peak_s: float
    steepness: float
    half_decay_s: float
    duration_s: float

    def __post_init__(self):
        vals = (self.pefr_lps, self.t_peak_s, self.steepness,
                self.half_decay_s, self.duration_s)
        if any(v <= 0 for v in vals):
            raise InvalidParams("all profile parameters must be positive")
        if self.t_peak_s >= self.duration_s:
            raise InvalidParams("t_peak must precede the profile duration")

    def flow_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        out = np.zeros(t.shape)
        rising = (t >= 0.0) & (t <= self.t_peak_s)
        s = t[rising] / self.t_peak_s
        out[rising] = self.pefr_lps * (3.0 * s * s - 2.0 * s ** 3)
        decaying = t > self.t_peak_s
        out[decaying] = hill_decay(t[decaying] - self.t_peak_s,
                                   self.steepness, self.half_decay_s,
                                   self.pefr_lps)
        return out

    def sample(self, dt_s: float = 0.001) -> FlowCurve:
        n = int(round(self.duration_s / dt_s))
        times = np.arange(n + 1) * dt_s
        return FlowCurve(times_s=times, flows_lps=self.flow_at(times))

    def fvc_l(self) -> float:
        """Exhaled volume over [0, duration] by adaptive quadrature."""
        rise, _ = quad(lambda t: float(self.flow_at(t)), 0.0, self.t_peak_s)
        decay, _ = quad(lambda t: float(self.flow_at(t)), self.t_peak_s,
                        self.duration_s, limit=200)
        return rise + decay

    def fev1_l(self) -> float:
        """Volume over the first second (or the whole profile if shorter)."""
        hi = min(1.0, self.duration_s)
        parts = sorted({0.0, min(self.t_peak_s, hi), hi})
        return sum(quad(lambda t: float(self.flow_at(t)), a, b, limit=200)[0]
                   for a, b in zip(parts, parts[1:]))


def reference_flow_profile(pefr_lps: float, t_peak_s: float, steepness: float,
                           half_decay_s: float, duration_s: float,
                           dt_s: float = 0.001) -> FlowCurve:
    """Sampled ground-truth flow curve; see :class:`ReferenceProfile`."""
    return ReferenceProfile(pefr_lps, t_peak_s, steepness, half_decay_s,
                            duration_s).sample(dt_s)


@dataclass(frozen=True)
class SynthProfile:
    """Everything needed to voice a flow curve as whistle audio."""

    flow_curve: FlowCurve
    calibration: CalibrationModel
    snr_db: float = 40.0
    amplitude_model: str = AMPLITUDE_PROPORTIONAL

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise InvalidParams("snr_db must be finite")
        if self.amplitude_model not in (AMPLITUDE_CONSTANT,
                                        AMPLITUDE_PROPORTIONAL):
            raise InvalidParams(
                f"unknown amplitude model {self.amplitude_model!r}"
            )


def synthesize_whistle(profile: SynthProfile, sample_rate_hz: int = 44100,
                       seed: int = 0) -> AudioClip:
    """Phase-continuous chirp with f(t) = slope * flow(t) + intercept.

    The phase is the cumulative trapezoid integral of the instantaneous
    frequency; amplitude follows the profile's amplitude model, and white
    Gaussian noise is added over the maneuver span at the requested SNR.
    Deterministic for a fixed seed.
    """
    curve = profile.flow_curve
    cal = profile.calibration
    n = int(round((curve.times_s[-1] - curve.times_s[0]) * sample_rate_hz))
    if n < 2:
        raise InvalidParams("flow curve span too short to synthesize")
    t = curve.times_s[0] + np.arange(n) / sample_rate_hz

    flow = np.interp(t, curve.times_s, curve.flows_lps)
    freq = cal.slope_hz_per_lps * flow + cal.intercept_hz
    if freq.max() >= sample_rate_hz / 2.0:
        raise FrequencyAboveNyquist(
            f"peak frequency {freq.max():.0f} Hz exceeds Nyquist "
            f"{sample_rate_hz / 2:.0f} Hz"
        )

    dt = 1.0 / sample_rate_hz
    phase = 2.0 * np.pi * np.concatenate(
        ([0.0], np.cumsum(0.5 * (freq[1:] + freq[:-1]) * dt))
    )
    if profile.amplitude_model == AMPLITUDE_PROPORTIONAL:
        peak_flow = flow.max()
        amp = flow / peak_flow if peak_flow > 0 else np.zeros_like(flow)
    else:
        amp = np.ones_like(flow)

    signal = amp * np.sin(phase)
    power = float(np.mean(signal ** 2))
    if power > 0.0:
        sigma = np.sqrt(power / 10.0 ** (profile.snr_db / 10.0))
        rng = np.random.default_rng(seed)
        signal = signal + rng.normal(0.0, sigma, signal.size)

    return AudioClip(samples=signal, sample_rate_hz=sample_rate_hz,
                     source_id=f"synth:seed={seed}")
