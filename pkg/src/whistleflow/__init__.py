"""Acoustic spirometry: whistle recordings to flow curves and lung parameters.

Pipeline: decode -> spectrogram -> pitch trace -> dynamic bandpass ->
second trace -> min-fusion -> calibration to flow -> piecewise maneuver
fit -> Simpson-integrated report.
"""

from .audio import AudioClip, decode_wav, encode_wav_pcm16, normalize, trim_silence
from .bandpass import BandpassSpec, apply_filter, design_bandpass
from .calibration import CalibrationModel, fit_calibration, freq_to_flow
from .maneuver import (
    FlowCurve,
    ManeuverFit,
    extrapolate,
    find_peak,
    fit_decay,
    fit_maneuver,
    fit_rise,
    hill_decay,
)
from .report import (
    SpirometryReport,
    compute_report,
    integrate_volume,
    select_best_trial,
)
from .spectral import (
    Spectrogram,
    band_estimate,
    power_spectral_density,
    spectral_rolloff,
    stft,
)
from .synth import ReferenceProfile, SynthProfile, synthesize_whistle
from .trace import AnalysisConfig, FrequencyTrace, analyze_frequency, fuse_traces

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "AudioClip",
    "BandpassSpec",
    "CalibrationModel",
    "FlowCurve",
    "FrequencyTrace",
    "ManeuverFit",
    "ReferenceProfile",
    "Spectrogram",
    "SpirometryReport",
    "SynthProfile",
    "analyze_frequency",
    "apply_filter",
    "band_estimate",
    "compute_report",
    "decode_wav",
    "design_bandpass",
    "encode_wav_pcm16",
    "extrapolate",
    "find_peak",
    "fit_calibration",
    "fit_decay",
    "fit_maneuver",
    "fit_rise",
    "freq_to_flow",
    "fuse_traces",
    "hill_decay",
    "integrate_volume",
    "normalize",
    "power_spectral_density",
    "select_best_trial",
    "spectral_rolloff",
    "stft",
    "synthesize_whistle",
    "trim_silence",
]
