"""Linear frequency <-> flow calibration from constant-flow characterization.

A device profile is an ordinary least-squares line freq = slope*flow +
intercept fitted to (flow, frequency) pairs recorded at known constant
flow rates, stored as a small JSON file per physical device.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import DegenerateFit, InsufficientData
from .maneuver import FlowCurve
from .trace import FrequencyTrace

FLAG_CLAMPED = "clamped_negative_flow"
FLAG_EXTRAPOLATED = "calibration_extrapolated"


@dataclass(frozen=True)
class CalibrationModel:
    slope_hz_per_lps: float
    intercept_hz: float
    r_squared: float
    residual_std_hz: float
    flow_range_lps: tuple[float, float]
    device_profile_id: str = "default"
    created_at: str = ""

    def freq_at(self, flow_lps):
        return self.slope_hz_per_lps * np.asarray(flow_lps) + self.intercept_hz

    def to_json_dict(self) -> dict:
        return {
            "slope_hz_per_lps": self.slope_hz_per_lps,
            "intercept_hz": self.intercept_hz,
            "r_squared": self.r_squared,
            "residual_std_hz": self.residual_std_hz,
            "flow_range_lps": list(self.flow_range_lps),
            "device_profile_id": self.device_profile_id,
            "created_at": self.created_at,
        }


def fit_calibration(points, device_profile_id: str = "default"
                    ) -> CalibrationModel:
    """OLS line through (flow_lps, freq_hz) pairs.

    Needs at least two points with two distinct flow values; the fitted
    slope must be positive (frequency rises with flow on this device
    family), otherwise the data is considered degenerate.
    """
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise InsufficientData("need at least two (flow, freq) points")
    flows, freqs = pts[:, 0], pts[:, 1]
    if np.ptp(flows) == 0.0:
        raise DegenerateFit("all calibration points share one flow value")

    slope, intercept = np.polyfit(flows, freqs, 1)
    if slope <= 0.0:
        raise DegenerateFit(f"fitted slope {slope:.4g} Hz/(L/s) is not positive")

    predicted = slope * flows + intercept
    residuals = freqs - predicted
    ss_res = float(np.sum(residuals ** 2))
    ss_tot = float(np.sum((freqs - freqs.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    dof = max(1, flows.size - 2)
    residual_std = float(np.sqrt(ss_res / dof))

    return CalibrationModel(
        slope_hz_per_lps=float(slope),
        intercept_hz=float(intercept),
        r_squared=min(1.0, r_squared),
        residual_std_hz=residual_std,
        flow_range_lps=(float(flows.min()), float(flows.max())),
        device_profile_id=device_profile_id,
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def freq_to_flow(model: CalibrationModel, trace: FrequencyTrace) -> FlowCurve:
    """Invert the calibration line over a frequency trace.

    flow(t) = (freq(t) - intercept) / slope.  Negative flows (frequencies
    below the intercept) clamp to zero with a quality flag; flows beyond
    the fitted range are flagged as extrapolated but kept.
    """
    raw = (trace.freqs_hz - model.intercept_hz) / model.slope_hz_per_lps
    flags = []
    if np.any(raw < 0.0):
        flags.append(FLAG_CLAMPED)
    lo, hi = model.flow_range_lps
    if np.any((raw < lo) | (raw > hi)):
        flags.append(FLAG_EXTRAPOLATED)
    return FlowCurve(
        times_s=trace.times_s.copy(),
        flows_lps=np.maximum(raw, 0.0),
        quality_flags=tuple(flags),
    )


def save_profile(model: CalibrationModel, path) -> None:
    with open(path, "w") as handle:
        json.dump(model.to_json_dict(), handle, indent=2)
        handle.write("\n")


def load_profile(path) -> CalibrationModel:
    with open(path) as handle:
        d = json.load(handle)
    return CalibrationModel(
        slope_hz_per_lps=d["slope_hz_per_lps"],
        intercept_hz=d["intercept_hz"],
        r_squared=d["r_squared"],
        residual_std_hz=d["residual_std_hz"],
        flow_range_lps=tuple(d["flow_range_lps"]),
        device_profile_id=d.get("device_profile_id", "default"),
        created_at=d.get("created_at", ""),
    )
