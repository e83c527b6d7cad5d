"""Spirometry parameters from the fitted maneuver: FVC, FEV1, PEFR, ratios.

All volumes come from composite Simpson integration on the uniform
resampling grid; when an interval count is odd the final subinterval falls
back to the trapezoid rule.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrialSet, RangeOutOfBounds
from .maneuver import FlowCurve, ManeuverFit, extrapolate

DEFAULT_GRID_S = 0.001

FLAG_OBSTRUCTIVE = "obstructive_pattern"
FLAG_HIGH_RATIO = "atypically_high_ratio"
FLAG_SHORT_MANEUVER = "maneuver_shorter_than_1s"

RATIO_LOW_THRESHOLD = 0.70
RATIO_HIGH_THRESHOLD = 0.90


def _grid_step(times: np.ndarray) -> float:
    steps = np.diff(times)
    dt = float(steps[0])
    if not np.allclose(steps, dt, rtol=1e-6, atol=1e-12):
        raise ValueError("curve is not on a uniform grid")
    return dt


def simpson_on_grid(values: np.ndarray, dt: float) -> float:
    """Composite Simpson over uniformly spaced samples.

    Odd interval counts use Simpson on the leading pairs plus a trapezoid
    on the final subinterval.
    """
    y = np.asarray(values, dtype=np.float64)
    m = y.size - 1
    if m <= 0:
        return 0.0
    pairs = m // 2
    idx = 2 * np.arange(pairs)
    total = dt / 3.0 * float(np.sum(y[idx] + 4.0 * y[idx + 1] + y[idx + 2]))
    if m % 2 == 1:
        total += dt / 2.0 * float(y[-2] + y[-1])
    return total


def cumulative_volume(values: np.ndarray, dt: float) -> np.ndarray:
    """Prefix volumes consistent with :func:`simpson_on_grid`.

    Even prefixes accumulate Simpson pairs; odd prefixes add one trapezoid
    step on top of the previous even prefix, so the final entry always
    equals the composite rule over the whole span.
    """
    y = np.asarray(values, dtype=np.float64)
    n = y.size
    out = np.zeros(n)
    if n < 2:
        return out
    pairs = (n - 1) // 2
    idx = 2 * np.arange(pairs)
    pair_inc = dt / 3.0 * (y[idx] + 4.0 * y[idx + 1] + y[idx + 2])
    out[idx + 2] = np.cumsum(pair_inc)
    odd = np.arange(1, n, 2)
    out[odd] = out[odd - 1] + dt / 2.0 * (y[odd - 1] + y[odd])
    return out


def integrate_volume(curve: FlowCurve, t_from: float, t_to: float) -> float:
    """Volume (liters) of the flow curve between two instants.

    The curve must live on a uniform grid; the endpoints are snapped to the
    nearest grid points.
    """
    if len(curve) < 2:
        raise RangeOutOfBounds("curve too short to integrate")
    dt = _grid_step(curve.times_s)
    t0, t1 = curve.times_s[0], curve.times_s[-1]
    if t_from > t_to or t_from < t0 - dt / 2 or t_to > t1 + dt / 2:
        raise RangeOutOfBounds(
            f"[{t_from}, {t_to}] outside curve span [{t0}, {t1}]"
        )
    i0 = int(round((t_from - t0) / dt))
    i1 = int(round((t_to - t0) / dt))
    return simpson_on_grid(curve.flows_lps[i0:i1 + 1], dt)


def fev1_fvc_ratio(fev1_l: float, fvc_l: float) -> float:
    return fev1_l / fvc_l if fvc_l > 0.0 else 0.0


@dataclass(frozen=True)
class SpirometryReport:
    fvc_l: float
    fev1_l: float
    fev1_fvc_ratio: float
    pefr_lps: float
    fvc50_ratio: float
    fvc75_ratio: float
    volume_time: dict
    flow_volume: dict
    quality_flags: tuple[str, ...]
    pipeline_metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "fvc_l": self.fvc_l,
            "fev1_l": self.fev1_l,
            "fev1_fvc_ratio": self.fev1_fvc_ratio,
            "pefr_lps": self.pefr_lps,
            "fvc50_ratio": self.fvc50_ratio,
            "fvc75_ratio": self.fvc75_ratio,
            "volume_time": self.volume_time,
            "flow_volume": self.flow_volume,
            "quality_flags": list(self.quality_flags),
            "pipeline_metadata": self.pipeline_metadata,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)


_number_array = {"type": "array", "items": {"type": "number"}}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "fvc_l", "fev1_l", "fev1_fvc_ratio", "pefr_lps",
        "fvc50_ratio", "fvc75_ratio", "volume_time", "flow_volume",
        "quality_flags", "pipeline_metadata",
    ],
    "properties": {
        "fvc_l": {"type": "number", "minimum": 0},
        "fev1_l": {"type": "number", "minimum": 0},
        "fev1_fvc_ratio": {"type": "number", "minimum": 0, "maximum": 1},
        "pefr_lps": {"type": "number", "minimum": 0},
        "fvc50_ratio": {"type": "number", "minimum": 0, "maximum": 1},
        "fvc75_ratio": {"type": "number", "minimum": 0, "maximum": 1},
        "volume_time": {
            "type": "object",
            "required": ["times_s", "volume_l"],
            "properties": {"times_s": _number_array, "volume_l": _number_array},
        },
        "flow_volume": {
            "type": "object",
            "required": ["volume_l", "flow_lps"],
            "properties": {"volume_l": _number_array, "flow_lps": _number_array},
        },
        "quality_flags": {"type": "array", "items": {"type": "string"}},
        "pipeline_metadata": {"type": "object"},
    },
}


def validate_report(report_dict: dict) -> None:
    """Raise jsonschema.ValidationError if the dict breaks the schema."""
    import jsonschema

    jsonschema.validate(report_dict, REPORT_SCHEMA)


def report_from_curve(curve: FlowCurve, calibration_id: str,
                      metadata: dict | None = None) -> SpirometryReport:
    """Spirometry parameters of a uniform-grid flow curve.

    FVC is the volume over the whole span, FEV1 the volume over the first
    second, PEFR the curve maximum.  FVC_x% is the cumulative volume at x%
    of the maneuver duration, as a fraction of FVC.
    """
    times = curve.times_s
    flows = curve.flows_lps
    dt = _grid_step(times)
    n_last = times.size - 1

    cum = cumulative_volume(flows, dt)
    fvc = float(cum[-1])
    pefr = float(flows.max())

    flags = list(curve.quality_flags)
    i_1s = int(round(1.0 / dt))
    if i_1s >= n_last:
        fev1 = fvc
        flags.append(FLAG_SHORT_MANEUVER)
    else:
        fev1 = float(cum[i_1s])

    ratio = fev1_fvc_ratio(fev1, fvc)
    if ratio < RATIO_LOW_THRESHOLD:
        flags.append(FLAG_OBSTRUCTIVE)
    elif ratio > RATIO_HIGH_THRESHOLD:
        flags.append(FLAG_HIGH_RATIO)

    i50 = int(round(0.50 * n_last))
    i75 = int(round(0.75 * n_last))
    fvc50 = float(cum[i50]) / fvc if fvc > 0 else 0.0
    fvc75 = float(cum[i75]) / fvc if fvc > 0 else 0.0

    meta = dict(metadata or {})
    meta.setdefault("calibration_id", calibration_id)
    meta.setdefault("grid_s", dt)

    return SpirometryReport(
        fvc_l=fvc,
        fev1_l=fev1,
        fev1_fvc_ratio=ratio,
        pefr_lps=pefr,
        fvc50_ratio=fvc50,
        fvc75_ratio=fvc75,
        volume_time={"times_s": times.tolist(), "volume_l": cum.tolist()},
        flow_volume={"volume_l": cum.tolist(), "flow_lps": flows.tolist()},
        quality_flags=tuple(flags),
        pipeline_metadata=meta,
    )


def compute_report(fit: ManeuverFit, calibration_id: str,
                   grid_s: float = DEFAULT_GRID_S,
                   metadata: dict | None = None) -> SpirometryReport:
    """Resample the extrapolated maneuver and assemble the report."""
    curve = extrapolate(fit, grid_s)
    meta = dict(metadata or {})
    meta.update({
        "calibration_id": calibration_id,
        "maneuver": {
            "t0_s": fit.t0_s,
            "t_peak_s": fit.t_peak_s,
            "t_end_s": fit.t_end_s,
            "rise_start_s": fit.rise_start_s,
            "linear_slope_lps_per_s": fit.linear_slope_lps_per_s,
            "cubic": list(fit.cubic),
            "hill": list(fit.hill),
            "rise_residual_rms": fit.rise_residual_rms,
            "decay_residual_rms": fit.decay_residual_rms,
            "junction_gap_lps": fit.junction_gap_lps,
        },
        "fit_log": list(fit.fit_log),
    })
    return report_from_curve(curve, calibration_id, meta)


def select_best_trial(trials) -> int:
    """Index of the trial whose trace reaches the highest peak frequency.

    ``trials`` is a sequence of (FrequencyTrace, SpirometryReport) pairs;
    the earliest trial wins ties.
    """
    trials = list(trials)
    if not trials:
        raise EmptyTrialSet("no trials to select from")
    peaks = [trace.peak_freq_hz for trace, _ in trials]
    return int(np.argmax(peaks))


def export_flow_csv(curve: FlowCurve, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time_s", "flow_lps"])
        for t, q in zip(curve.times_s, curve.flows_lps):
            writer.writerow([f"{t:.6f}", f"{q:.6f}"])
