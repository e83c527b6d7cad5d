"""Short-time spectral analysis: spectrogram, PSD, rolloff and band bounds.

The spectrogram is the workhorse of the whole pipeline: frame magnitudes
feed the pitch trace, per-frame RMS loudness gates out feeble regions, and
the min/max of the dominant frequencies define the band the dynamic filter
is designed for.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .errors import ClipTooShort, NoSignal

DEFAULT_WINDOW_LEN = 2048
DEFAULT_ROLLOFF_FRACTION = 0.85
DEFAULT_LOUDNESS_FLOOR_DB = -35.0

_DB_FLOOR = 1e-12

_WINDOWS = {
    "hann": np.hanning,
    "hamming": np.hamming,
    "rect": np.ones,
}


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude spectrogram on a uniform time/frequency grid.

    ``magnitudes`` is frames x bins, un-normalized |rfft| of the windowed
    frames.  ``loudness_db`` is per-frame time-domain RMS relative to the
    clip peak; it rides along so gating decisions do not need the clip.
    """

    magnitudes: np.ndarray
    frame_times_s: np.ndarray
    bin_freqs_hz: np.ndarray
    window_len: int
    hop: int
    window_kind: str
    sample_rate_hz: int
    loudness_db: np.ndarray
    complete: np.ndarray  # frames fully inside the signal (no zero padding)

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def bin_width_hz(self) -> float:
        return self.sample_rate_hz / self.window_len

    @property
    def nyquist_hz(self) -> float:
        return self.sample_rate_hz / 2.0


def _window(kind: str, length: int) -> np.ndarray:
    try:
        return _WINDOWS[kind](length)
    except KeyError:
        raise ValueError(f"unknown window kind {kind!r}") from None


def stft(clip: AudioClip, window_len: int = DEFAULT_WINDOW_LEN,
         hop: int | None = None, window_kind: str = "hann") -> Spectrogram:
    """Magnitude STFT with frames at every hop offset inside the clip.

    Frames start at 0, hop, 2*hop, ... for every offset strictly inside the
    signal; frames running past the end are zero-padded.  This keeps the
    frame grid uniform and means appending silence to a clip only appends
    zero-magnitude frames.
    """
    x = clip.samples
    n = x.size
    if window_len > n:
        raise ClipTooShort(f"window {window_len} exceeds clip length {n}")
    if hop is None:
        hop = window_len // 4
    if not 0 < hop <= window_len:
        raise ValueError("hop must be in (0, window_len]")

    n_frames = int(np.ceil(n / hop))
    padded = np.concatenate([x, np.zeros(window_len)])
    starts = np.arange(n_frames) * hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, window_len)[starts]

    win = _window(window_kind, window_len)
    magnitudes = np.abs(np.fft.rfft(frames * win, axis=1))

    peak = clip.peak
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    if peak > 0.0:
        loudness_db = 20.0 * np.log10(np.maximum(rms, _DB_FLOOR) / peak)
    else:
        loudness_db = np.full(n_frames, -np.inf)

    fs = clip.sample_rate_hz
    return Spectrogram(
        magnitudes=magnitudes,
        frame_times_s=(starts + window_len / 2.0) / fs,
        bin_freqs_hz=np.arange(magnitudes.shape[1]) * fs / window_len,
        window_len=window_len,
        hop=hop,
        window_kind=window_kind,
        sample_rate_hz=fs,
        loudness_db=loudness_db,
        complete=starts + window_len <= n,
    )


def dominant_frequencies(spec: Spectrogram) -> np.ndarray:
    """Per-frame dominant frequency: argmax bin refined by parabolic
    interpolation over the three neighboring log magnitudes.

    Zero-energy frames yield 0.
    """
    mags = spec.magnitudes
    db = 20.0 * np.log10(np.maximum(mags, _DB_FLOOR))
    k = np.argmax(mags, axis=1)
    rows = np.arange(mags.shape[0])

    inner = (k > 0) & (k < mags.shape[1] - 1)
    delta = np.zeros(mags.shape[0])
    ki = k[inner]
    alpha = db[rows[inner], ki - 1]
    beta = db[rows[inner], ki]
    gamma = db[rows[inner], ki + 1]
    denom = alpha - 2.0 * beta + gamma
    safe = np.abs(denom) > 1e-12
    d = np.zeros(ki.size)
    d[safe] = 0.5 * (alpha[safe] - gamma[safe]) / denom[safe]
    delta[inner] = np.clip(d, -0.5, 0.5)

    freqs = (k + delta) * spec.bin_width_hz
    freqs[mags.max(axis=1) <= 0.0] = 0.0
    return freqs


def peak_prominences_db(spec: Spectrogram) -> np.ndarray:
    """Per-frame height of the strongest bin over the median bin, in dB.

    Narrowband whistles stand tens of dB above the median; broadband noise
    never exceeds ~13 dB for 2048-point frames.
    """
    mags = spec.magnitudes
    med = np.median(mags, axis=1)
    top = mags.max(axis=1)
    out = np.full(mags.shape[0], -np.inf)
    ok = top > 0.0
    out[ok] = 20.0 * np.log10(top[ok] / np.maximum(med[ok], _DB_FLOOR))
    return out


def spectral_rolloff(spec: Spectrogram,
                     fraction: float = DEFAULT_ROLLOFF_FRACTION) -> np.ndarray:
    """Lowest frequency below which ``fraction`` of each frame's spectral
    energy lies.  Zero-energy frames roll off at 0 by convention."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    energy = spec.magnitudes ** 2
    cum = np.cumsum(energy, axis=1)
    total = cum[:, -1]
    out = np.zeros(spec.n_frames)
    ok = total > 0.0
    if np.any(ok):
        target = fraction * total[ok, None]
        idx = (cum[ok] < target).sum(axis=1)  # first bin with cum >= target
        out[ok] = spec.bin_freqs_hz[idx]
    return out


def band_estimate(spec: Spectrogram,
                  loudness_floor_db: float = DEFAULT_LOUDNESS_FLOOR_DB
                  ) -> tuple[float, float]:
    """(fmin, fmax) of per-frame dominant frequencies over frames whose
    loudness exceeds the floor."""
    if spec.n_frames == 0:
        raise NoSignal("empty spectrogram")
    mask = (spec.loudness_db >= loudness_floor_db) & \
        (spec.magnitudes.max(axis=1) > 0.0) & spec.complete
    if not np.any(mask):
        raise NoSignal("no frame above the loudness floor")
    freqs = dominant_frequencies(spec)[mask]
    return float(freqs.min()), float(freqs.max())


def power_spectral_density(clip: AudioClip, segment_len: int = DEFAULT_WINDOW_LEN,
                           overlap: float = 0.5, window_kind: str = "hann"
                           ) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Welch PSD estimate (averaged modified periodogram).

    Segments are mean-removed and Hann-windowed; density scaling is
    |X|^2 / (fs * sum(w^2)) with single-sided doubling, so the integral of
    the density over frequency approximates the signal variance.

    Returns (freqs_hz, density).
    """
    x = clip.samples
    n = x.size
    if segment_len > n:
        raise ClipTooShort(f"segment {segment_len} exceeds clip length {n}")
    step = max(1, int(round(segment_len * (1.0 - overlap))))
    win = _window(window_kind, segment_len)
    scale = 1.0 / (clip.sample_rate_hz * np.sum(win * win))

    starts = range(0, n - segment_len + 1, step)
    acc = np.zeros(segment_len // 2 + 1)
    count = 0
    for s in starts:
        seg = x[s:s + segment_len]
        seg = seg - seg.mean()
        acc += np.abs(np.fft.rfft(seg * win)) ** 2
        count += 1
    psd = acc * (scale / count)
    psd[1:-1] *= 2.0  # fold negative frequencies; DC and Nyquist stay single
    freqs = np.arange(psd.size) * clip.sample_rate_hz / segment_len
    return freqs, psd


@dataclass(frozen=True)
class SpectralSummary:
    """Signal characteristics the dynamic filter design consumes."""

    fmin_hz: float
    fmax_hz: float
    psd_freqs_hz: np.ndarray
    psd: np.ndarray
    rolloff_hz: np.ndarray
    loudness_db: np.ndarray


def spectral_summary(clip: AudioClip, window_len: int = DEFAULT_WINDOW_LEN,
                     hop: int | None = None,
                     rolloff_fraction: float = DEFAULT_ROLLOFF_FRACTION,
                     loudness_floor_db: float = DEFAULT_LOUDNESS_FLOOR_DB
                     ) -> SpectralSummary:
    spec = stft(clip, window_len=window_len, hop=hop)
    fmin, fmax = band_estimate(spec, loudness_floor_db)
    psd_freqs, psd = power_spectral_density(clip, segment_len=window_len)
    return SpectralSummary(
        fmin_hz=fmin,
        fmax_hz=fmax,
        psd_freqs_hz=psd_freqs,
        psd=psd,
        rolloff_hz=spectral_rolloff(spec, rolloff_fraction),
        loudness_db=spec.loudness_db.copy(),
    )


def export_spectrogram_csv(spec: Spectrogram, path) -> None:
    """Dump (frame_time_s, bin_freq_hz, magnitude) triples for debug plots."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["frame_time_s", "bin_freq_hz", "magnitude"])
        for i, t in enumerate(spec.frame_times_s):
            for f, m in zip(spec.bin_freqs_hz, spec.magnitudes[i]):
                writer.writerow([f"{t:.6f}", f"{f:.3f}", f"{m:.8g}"])
