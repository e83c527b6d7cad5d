"""Dynamic bandpass filter: 2-pole Butterworth design plus zero-phase apply.

The band edges come from the measured signal (see ``trace.analyze_frequency``);
this module turns them into a discretized maximally-flat bandpass via the
bilinear transform with frequency prewarping, so the magnitude response is
exactly -3 dB at both requested edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import AudioClip
from .errors import InvalidBand, RateMismatch

DEFAULT_MARGIN_FRACTION = 0.10


@dataclass(frozen=True)
class BandpassSpec:
    """Discretized second-order Butterworth bandpass."""

    low_cut_hz: float
    high_cut_hz: float
    sample_rate_hz: int
    b: np.ndarray  # feedforward, length 3
    a: np.ndarray  # feedback, length 3, a[0] == 1
    order: int = 2

    def poles(self) -> np.ndarray:
        return np.roots(self.a)

    def magnitude(self, freqs_hz) -> np.ndarray:
        """|H(e^{j 2 pi f / fs})| evaluated on the unit circle."""
        z = np.exp(-2j * np.pi * np.atleast_1d(freqs_hz) / self.sample_rate_hz)
        num = self.b[0] + self.b[1] * z + self.b[2] * z * z
        den = self.a[0] + self.a[1] * z + self.a[2] * z * z
        return np.abs(num / den)

    def to_json_dict(self) -> dict:
        return {
            "low_cut_hz": self.low_cut_hz,
            "high_cut_hz": self.high_cut_hz,
            "order": self.order,
            "sample_rate_hz": self.sample_rate_hz,
            "feedforward": list(self.b),
            "feedback": list(self.a),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, d: dict) -> "BandpassSpec":
        return cls(
            low_cut_hz=d["low_cut_hz"],
            high_cut_hz=d["high_cut_hz"],
            sample_rate_hz=d["sample_rate_hz"],
            b=np.asarray(d["feedforward"], dtype=float),
            a=np.asarray(d["feedback"], dtype=float),
            order=d.get("order", 2),
        )


def design_bandpass(fmin_hz: float, fmax_hz: float, sample_rate_hz: int,
                    margin_fraction: float = DEFAULT_MARGIN_FRACTION
                    ) -> BandpassSpec:
    """Design the bandpass for a measured band, widened by the margin.

    Edges become fmin*(1-margin) and fmax*(1+margin).  The analog prototype
    H(s) = bw*s / (s^2 + bw*s + w0^2) is discretized by the bilinear
    transform after prewarping both edges, which pins |H| = 1/sqrt(2) at
    exactly the requested digital edge frequencies.
    """
    low = fmin_hz * (1.0 - margin_fraction)
    high = fmax_hz * (1.0 + margin_fraction)
    nyquist = sample_rate_hz / 2.0
    if not 0.0 < low < high < nyquist:
        raise InvalidBand(
            f"band ({low:.1f}, {high:.1f}) Hz invalid at fs {sample_rate_hz}"
        )

    k = 2.0 * sample_rate_hz
    w1 = k * np.tan(np.pi * low / sample_rate_hz)
    w2 = k * np.tan(np.pi * high / sample_rate_hz)
    bw = w2 - w1
    w0sq = w1 * w2

    a0 = k * k + bw * k + w0sq
    b = np.array([bw * k, 0.0, -bw * k]) / a0
    a = np.array([a0, 2.0 * (w0sq - k * k), k * k - bw * k + w0sq]) / a0

    spec = BandpassSpec(low_cut_hz=low, high_cut_hz=high,
                        sample_rate_hz=sample_rate_hz, b=b, a=a)
    if np.any(np.abs(spec.poles()) >= 1.0):
        raise InvalidBand("designed filter is unstable")  # defensive; unreachable
    return spec


def settling_length(spec: BandpassSpec) -> int:
    """Samples for the impulse-response envelope to decay below 1%."""
    rmax = float(np.max(np.abs(spec.poles())))
    return int(np.ceil(np.log(0.01) / np.log(rmax)))


def apply_filter(clip: AudioClip, spec: BandpassSpec) -> AudioClip:
    """Zero-phase filtering: forward pass, then a time-reversed pass.

    The signal is extended by odd reflection over 3x the filter settling
    length before filtering and cropped afterwards, which suppresses edge
    transients without shifting the trace in time.
    """
    if spec.sample_rate_hz != clip.sample_rate_hz:
        raise RateMismatch(
            f"filter designed for {spec.sample_rate_hz} Hz, "
            f"clip is {clip.sample_rate_hz} Hz"
        )
    x = clip.samples
    pad = min(3 * settling_length(spec), x.size - 1)
    if pad > 0:
        head = 2.0 * x[0] - x[pad:0:-1]
        tail = 2.0 * x[-1] - x[-2:-pad - 2:-1]
        ext = np.concatenate([head, x, tail])
    else:
        ext = x

    y = lfilter(spec.b, spec.a, ext)
    y = lfilter(spec.b, spec.a, y[::-1])[::-1]
    if pad > 0:
        y = y[pad:pad + x.size]
    return AudioClip(samples=y, sample_rate_hz=clip.sample_rate_hz,
                     source_id=clip.source_id, flags=clip.flags)
