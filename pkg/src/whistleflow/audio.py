"""Decode, normalize and pre-condition whistle recordings.

The decoder understands plain RIFF/WAVE containers with uncompressed
PCM 16-bit or IEEE float 32-bit payloads, mono or stereo.  Everything
downstream works on :class:`AudioClip`, an immutable float64 view of the
signal plus its sample rate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyAfterTrim, MalformedFile, UnsupportedEncoding

MIN_RATE_HZ = 8000
MAX_RATE_HZ = 192000

_FMT_PCM = 0x0001
_FMT_IEEE_FLOAT = 0x0003
_FMT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    """Mono PCM samples (dimensionless, nominal range [-1, 1]) plus rate."""

    samples: np.ndarray
    sample_rate_hz: int
    source_id: str = "unknown"
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("AudioClip requires a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if not MIN_RATE_HZ <= self.sample_rate_hz <= MAX_RATE_HZ:
            raise ValueError(
                f"sample rate {self.sample_rate_hz} outside "
                f"[{MIN_RATE_HZ}, {MAX_RATE_HZ}]"
            )

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples)))


def _read_chunks(data: bytes):
    """Yield (fourcc, payload) for every top-level chunk inside the WAVE body."""
    pos = 12
    while pos + 8 <= len(data):
        fourcc = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedFile(f"chunk {fourcc!r} truncated")
        yield fourcc, body
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string into a mono :class:`AudioClip`.

    Stereo input is averaged per-sample.  Raises :class:`MalformedFile` for
    broken containers and :class:`UnsupportedEncoding` for compressed
    codecs, unexpected bit depths, more than two channels, or sample rates
    outside the supported range.
    """
    if len(data) < 44:
        raise MalformedFile("file shorter than a minimal WAV header")
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedFile("missing RIFF/WAVE magic")

    fmt = None
    payload = None
    for fourcc, body in _read_chunks(data):
        if fourcc == b"fmt ":
            fmt = body
        elif fourcc == b"data":
            payload = body
    if fmt is None or len(fmt) < 16:
        raise MalformedFile("missing or short fmt chunk")
    if payload is None:
        raise MalformedFile("missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _FMT_EXTENSIBLE:
        if len(fmt) < 40:
            raise MalformedFile("extensible fmt chunk truncated")
        (tag,) = struct.unpack_from("<H", fmt, 24)  # first GUID word is the codec

    if tag not in (_FMT_PCM, _FMT_IEEE_FLOAT):
        raise UnsupportedEncoding(f"compressed or unknown codec tag 0x{tag:04x}")
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{channels} channels unsupported (need 1-2)")
    if not MIN_RATE_HZ <= rate <= MAX_RATE_HZ:
        raise UnsupportedEncoding(f"sample rate {rate} outside supported range")

    if tag == _FMT_PCM:
        if bits != 16:
            raise UnsupportedEncoding(f"{bits}-bit PCM unsupported (need 16)")
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (2 * channels)],
                            dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    else:
        if bits != 32:
            raise UnsupportedEncoding(f"{bits}-bit float unsupported (need 32)")
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (4 * channels)],
                            dtype="<f4")
        samples = raw.astype(np.float64)

    if samples.size == 0:
        raise MalformedFile("data chunk holds no samples")
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    if not np.all(np.isfinite(samples)):
        raise MalformedFile("non-finite sample values in data chunk")
    return AudioClip(samples=samples, sample_rate_hz=rate, source_id="wav")


def encode_wav_pcm16(samples: np.ndarray, sample_rate_hz: int) -> bytes:
    """Encode float samples in [-1, 1] as mono 16-bit PCM WAV bytes.

    Quantization is round(x * 32768) clipped to the int16 range, so a
    decode -> encode round trip of 16-bit input is bit-exact.
    """
    x = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, _FMT_PCM, 1, sample_rate_hz,
        sample_rate_hz * 2, 2, 16,
    )
    header += b"data" + struct.pack("<I", len(payload))
    return header + payload


def write_wav(path, clip: AudioClip) -> None:
    with open(path, "wb") as handle:
        handle.write(encode_wav_pcm16(clip.samples, clip.sample_rate_hz))


def normalize(clip: AudioClip) -> AudioClip:
    """Scale the clip so its peak magnitude is 1.0.

    All-zero clips come back unchanged with a ``"silent"`` provenance flag.
    """
    peak = clip.peak
    if peak == 0.0:
        if "silent" in clip.flags:
            return clip
        return replace(clip, flags=clip.flags + ("silent",))
    if peak == 1.0:
        return clip
    return replace(clip, samples=clip.samples / peak)


def _moving_rms(x: np.ndarray, window: int) -> np.ndarray:
    """Centered RMS over ``window`` samples, shrinking at the edges."""
    n = x.size
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(x * x)))
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    return np.sqrt((csum[hi] - csum[lo]) / (hi - lo))


def trim_silence(clip: AudioClip, threshold_db: float = -40.0,
                 window_s: float = 0.020) -> AudioClip:
    """Drop leading/trailing regions whose local RMS is below threshold.

    ``threshold_db`` is relative to the clip peak and must be negative.
    The retained span is padded by one analysis window on each side so no
    above-threshold sample is ever removed.
    """
    if threshold_db >= 0:
        raise ValueError("threshold_db must be negative (relative to peak)")
    window = max(1, int(round(window_s * clip.sample_rate_hz)))
    floor = clip.peak * 10.0 ** (threshold_db / 20.0)
    active = np.nonzero(_moving_rms(clip.samples, window) >= floor)[0]
    if clip.peak == 0.0 or active.size == 0:
        raise EmptyAfterTrim("entire clip below the silence threshold")
    start = max(0, int(active[0]) - window)
    stop = min(clip.samples.size, int(active[-1]) + 1 + window)
    if start == 0 and stop == clip.samples.size:
        return clip
    return replace(clip, samples=clip.samples[start:stop])
