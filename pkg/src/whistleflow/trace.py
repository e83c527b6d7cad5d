"""Frequency-vs-time trace extraction with dynamic-filter refinement.

Two extraction passes run over the spectrogram: the first on the raw clip,
the second after a bandpass designed from the first pass's measured band.
The passes are smoothed and fused by a pointwise minimum, which suppresses
the upward excursions broadband interference causes in either pass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioClip, normalize
from .bandpass import DEFAULT_MARGIN_FRACTION, apply_filter, design_bandpass
from .errors import NoTrace
from .spectral import (
    DEFAULT_LOUDNESS_FLOOR_DB,
    DEFAULT_ROLLOFF_FRACTION,
    DEFAULT_WINDOW_LEN,
    Spectrogram,
    band_estimate,
    dominant_frequencies,
    peak_prominences_db,
    spectral_rolloff,
    stft,
)

DEFAULT_PROMINENCE_FLOOR_DB = 20.0
DEFAULT_SMOOTH_WINDOW = 5


@dataclass(frozen=True)
class AnalysisConfig:
    """Tunable knobs of the trace pipeline; defaults suit 44.1/48 kHz."""

    window_len: int = DEFAULT_WINDOW_LEN
    hop: int | None = None  # None -> window_len // 4
    window_kind: str = "hann"
    rolloff_fraction: float = DEFAULT_ROLLOFF_FRACTION
    loudness_floor_db: float = DEFAULT_LOUDNESS_FLOOR_DB
    prominence_floor_db: float = DEFAULT_PROMINENCE_FLOOR_DB
    band_margin_fraction: float = DEFAULT_MARGIN_FRACTION
    smooth_window: int = DEFAULT_SMOOTH_WINDOW

    @property
    def effective_hop(self) -> int:
        return self.hop if self.hop is not None else self.window_len // 4

    def to_json_dict(self) -> dict:
        return {
            "window_len": self.window_len,
            "hop": self.effective_hop,
            "window_kind": self.window_kind,
            "rolloff_fraction": self.rolloff_fraction,
            "loudness_floor_db": self.loudness_floor_db,
            "prominence_floor_db": self.prominence_floor_db,
            "band_margin_fraction": self.band_margin_fraction,
            "smooth_window": self.smooth_window,
        }


@dataclass(frozen=True)
class FrequencyTrace:
    """Time-stamped dominant-frequency points with per-point loudness."""

    times_s: np.ndarray
    freqs_hz: np.ndarray
    confidence_db: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=np.float64)
        f = np.asarray(self.freqs_hz, dtype=np.float64)
        c = np.asarray(self.confidence_db, dtype=np.float64)
        if not (t.size == f.size == c.size):
            raise ValueError("trace arrays must have equal lengths")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("trace times must be strictly increasing")
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "confidence_db", c)

    def __len__(self) -> int:
        return self.times_s.size

    @property
    def peak_freq_hz(self) -> float:
        return float(self.freqs_hz.max()) if len(self) else 0.0


def extract_trace(spec: Spectrogram,
                  loudness_floor_db: float = DEFAULT_LOUDNESS_FLOOR_DB,
                  rolloff_fraction: float = DEFAULT_ROLLOFF_FRACTION,
                  prominence_floor_db: float = DEFAULT_PROMINENCE_FLOOR_DB
                  ) -> FrequencyTrace:
    """One trace point per frame that passes all whistle gates.

    A frame qualifies when: it lies fully inside the signal (zero-padded
    tail frames estimate frequency over a crippled window), RMS loudness
    is above the floor, the dominant frequency does not exceed the frame's
    spectral rolloff, and the peak bin stands at least
    ``prominence_floor_db`` above the median bin.  The prominence gate is
    what rejects broadband noise: loudness and rolloff alone let most
    pure-noise frames through.
    """
    dom = dominant_frequencies(spec)
    rolloff = spectral_rolloff(spec, rolloff_fraction)
    prom = peak_prominences_db(spec)
    mask = (
        spec.complete
        & (spec.loudness_db >= loudness_floor_db)
        & (dom <= rolloff)
        & (dom > 0.0)
        & (prom >= prominence_floor_db)
    )
    if not np.any(mask):
        raise NoTrace("no spectrogram frame passes the whistle gates")
    return FrequencyTrace(
        times_s=spec.frame_times_s[mask],
        freqs_hz=dom[mask],
        confidence_db=spec.loudness_db[mask],
    )


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; the window shrinks near the edges."""
    x = np.asarray(values, dtype=np.float64)
    if window <= 1 or x.size <= 1:
        return x.copy()
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    lo = np.clip(np.arange(x.size) - half, 0, x.size)
    hi = np.clip(np.arange(x.size) + half + 1, 0, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def fuse_traces(first: FrequencyTrace, second: FrequencyTrace,
                smooth_window: int = DEFAULT_SMOOTH_WINDOW) -> FrequencyTrace:
    """Smooth both traces, then take the pointwise minimum frequency.

    Each trace is smoothed by a centered moving average, resampled by
    linear interpolation onto the union of the two time grids restricted
    to their overlap, and fused as min(freq); confidence is max().  An
    empty overlap yields an empty trace.
    """
    if len(first) == 0 or len(second) == 0:
        raise NoTrace("cannot fuse an empty trace")
    fa = moving_average(first.freqs_hz, smooth_window)
    fb = moving_average(second.freqs_hz, smooth_window)

    lo = max(first.times_s[0], second.times_s[0])
    hi = min(first.times_s[-1], second.times_s[-1])
    grid = np.union1d(first.times_s, second.times_s)
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size == 0:
        return FrequencyTrace(times_s=np.empty(0), freqs_hz=np.empty(0),
                              confidence_db=np.empty(0))

    ia = np.interp(grid, first.times_s, fa)
    ib = np.interp(grid, second.times_s, fb)
    ca = np.interp(grid, first.times_s, first.confidence_db)
    cb = np.interp(grid, second.times_s, second.confidence_db)
    return FrequencyTrace(
        times_s=grid,
        freqs_hz=np.minimum(ia, ib),
        confidence_db=np.maximum(ca, cb),
    )


def analyze_frequency(clip: AudioClip, config: AnalysisConfig | None = None
                      ) -> FrequencyTrace:
    """Full two-pass extraction: trace, design filter from the measured
    band, re-trace the filtered signal, fuse.

    The returned trace carries pipeline metadata (band, filter, config,
    per-pass point counts) for the report.  Raises ``NoTrace`` when no
    qualifying frames exist and propagates ``InvalidBand`` if the measured
    band cannot produce a valid filter.
    """
    cfg = config or AnalysisConfig()
    clip = normalize(clip)
    if "silent" in clip.flags:
        raise NoTrace("clip is silent")

    spec1 = stft(clip, cfg.window_len, cfg.effective_hop, cfg.window_kind)
    pass1 = extract_trace(spec1, cfg.loudness_floor_db, cfg.rolloff_fraction,
                          cfg.prominence_floor_db)
    fmin, fmax = band_estimate(spec1, cfg.loudness_floor_db)

    filt = design_bandpass(fmin, fmax, clip.sample_rate_hz,
                           cfg.band_margin_fraction)
    filtered = apply_filter(clip, filt)

    spec2 = stft(filtered, cfg.window_len, cfg.effective_hop, cfg.window_kind)
    pass2 = extract_trace(spec2, cfg.loudness_floor_db, cfg.rolloff_fraction,
                          cfg.prominence_floor_db)

    fused = fuse_traces(pass1, pass2, cfg.smooth_window)
    if len(fused) == 0:
        raise NoTrace("extraction passes do not overlap in time")

    metadata = {
        "band_hz": [fmin, fmax],
        "filter": filt.to_json_dict(),
        "config": cfg.to_json_dict(),
        "pass_points": [len(pass1), len(pass2)],
        "peak_freq_hz": fused.peak_freq_hz,
    }
    return FrequencyTrace(times_s=fused.times_s, freqs_hz=fused.freqs_hz,
                          confidence_db=fused.confidence_db, metadata=metadata)


def export_trace_csv(trace: FrequencyTrace, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time_s", "freq_hz", "confidence_db"])
        for t, f, c in zip(trace.times_s, trace.freqs_hz, trace.confidence_db):
            writer.writerow([f"{t:.6f}", f"{f:.4f}", f"{c:.2f}"])
