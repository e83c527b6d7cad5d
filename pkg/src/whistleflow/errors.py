"""Exception hierarchy shared by all pipeline stages.

Every error carries a stable machine-readable ``code`` so the CLI and the
ingestion service can map failures to exit codes / HTTP statuses without
string matching.
"""


class WhistleflowError(Exception):
    """Base class for all domain errors."""

    code = "error"

    def __init__(self, message=""):
        super().__init__(message or self.__doc__)


# audio ingest
class MalformedFile(WhistleflowError):
    """Input bytes are not a well-formed RIFF/WAVE container."""

    code = "malformed_file"


class UnsupportedEncoding(WhistleflowError):
    """WAV container is valid but uses an unsupported codec or layout."""

    code = "unsupported_encoding"


class EmptyAfterTrim(WhistleflowError):
    """The whole clip sits below the silence threshold."""

    code = "empty_after_trim"


# spectral analysis
class ClipTooShort(WhistleflowError):
    """Clip is shorter than one analysis window / segment."""

    code = "clip_too_short"


class NoSignal(WhistleflowError):
    """No frame rises above the loudness floor."""

    code = "no_signal"


# dynamic filter
class InvalidBand(WhistleflowError):
    """Band edges cross, are non-positive, or exceed Nyquist after margin."""

    code = "invalid_band"


class RateMismatch(WhistleflowError):
    """Filter was designed for a different sample rate than the clip."""

    code = "rate_mismatch"


# trace extraction
class NoTrace(WhistleflowError):
    """No spectrogram frame qualifies as a traceable whistle point."""

    code = "no_trace"


# calibration
class InsufficientData(WhistleflowError):
    """Too few calibration points to fit a line."""

    code = "insufficient_data"


class DegenerateFit(WhistleflowError):
    """Calibration data cannot produce a valid positive-slope line."""

    code = "degenerate_fit"


# maneuver model
class EmptyCurve(WhistleflowError):
    """Operation requires a non-empty flow curve."""

    code = "empty_curve"


class FitDiverged(WhistleflowError):
    """Nonlinear decay fit failed to converge within the iteration budget."""

    code = "fit_diverged"


class InvalidParams(WhistleflowError):
    """Synthesis profile parameters are out of range."""

    code = "invalid_params"


class FrequencyAboveNyquist(WhistleflowError):
    """Requested whistle frequency cannot be represented at this rate."""

    code = "frequency_above_nyquist"


# report
class RangeOutOfBounds(WhistleflowError):
    """Integration interval lies outside the curve span."""

    code = "range_out_of_bounds"


class EmptyTrialSet(WhistleflowError):
    """Best-trial selection needs at least one trial."""

    code = "empty_trial_set"


# service
class BadAudio(WhistleflowError):
    """Uploaded payload does not decode to audio."""

    code = "bad_audio"


class UnknownCalibration(WhistleflowError):
    """Referenced calibration profile is not registered."""

    code = "unknown_calibration"


class NotFound(WhistleflowError):
    """No record with the requested id."""

    code = "not_found"
