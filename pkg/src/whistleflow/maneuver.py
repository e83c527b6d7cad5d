"""Piecewise maneuver model of one forced expiration.

A measured flow curve is split at its peak: the rise is fitted with a
cubic, the decay with a decaying Hill function

    F(t) = c * b^a / ((t - t_peak)^a + b^a)

whose parameters read directly as c = peak flow, b = time after the peak
at which flow has halved, a = steepness.  A straight line from (t0, 0)
up to the first fitted rise point models the onset the microphone never
captured, and the Hill tail is extended until flow is negligible, giving
a complete curve that the report module can integrate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCurve, FitDiverged

TAIL_FLOW_FRACTION = 0.005   # extrapolate until flow <= 0.5% of peak
HARD_CAP_S = 15.0            # absolute ceiling on maneuver duration
ONSET_LOOKBACK_S = 0.5       # t0 may precede the first point by at most this
JUNCTION_TOLERANCE = 0.02    # rise/decay gap allowance, fraction of peak

FLAG_RISE_LINEAR = "rise_linear_fallback"
FLAG_RISE_DEGENERATE = "rise_degenerate"
FLAG_JUNCTION_GAP = "junction_gap_exceeded"


@dataclass(frozen=True)
class FlowCurve:
    """Non-negative flow samples on strictly increasing times."""

    times_s: np.ndarray
    flows_lps: np.ndarray
    quality_flags: tuple[str, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=np.float64)
        q = np.asarray(self.flows_lps, dtype=np.float64)
        if t.size != q.size:
            raise ValueError("times and flows must have equal lengths")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if q.size and (not np.all(np.isfinite(q)) or np.any(q < 0)):
            raise ValueError("flows must be finite and non-negative")
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "flows_lps", q)

    def __len__(self) -> int:
        return self.times_s.size


def find_peak(curve: FlowCurve) -> tuple[float, float]:
    """Time and value of the maximum flow; earliest index wins ties."""
    if len(curve) == 0:
        raise EmptyCurve("cannot locate the peak of an empty curve")
    i = int(np.argmax(curve.flows_lps))
    return float(curve.times_s[i]), float(curve.flows_lps[i])


def fit_rise(times_s, flows_lps) -> tuple[np.ndarray, float, tuple[str, ...]]:
    """Least-squares cubic over the rise segment (t <= t_peak).

    Returns (coefficients a,b,c,d highest power first, residual RMS,
    flags).  Fewer than 4 points fall back to a line (a = b = 0); a single
    point degenerates to a constant.
    """
    t = np.asarray(times_s, dtype=np.float64)
    y = np.asarray(flows_lps, dtype=np.float64)
    if t.size >= 4:
        coeffs = np.polyfit(t, y, 3)
        flags: tuple[str, ...] = ()
    elif t.size >= 2:
        slope, icept = np.polyfit(t, y, 1)
        coeffs = np.array([0.0, 0.0, slope, icept])
        flags = (FLAG_RISE_LINEAR,)
    elif t.size == 1:
        coeffs = np.array([0.0, 0.0, 0.0, y[0]])
        flags = (FLAG_RISE_DEGENERATE,)
    else:
        raise EmptyCurve("rise segment holds no points")
    residual_rms = float(np.sqrt(np.mean((np.polyval(coeffs, t) - y) ** 2)))
    return coeffs, residual_rms, flags


def hill_decay(tau, steepness: float, half_time: float, peak: float):
    """Decaying Hill value at time-after-peak tau (tau >= 0)."""
    tau = np.asarray(tau, dtype=np.float64)
    v = half_time ** steepness
    return peak * v / (tau ** steepness + v)


def _hill_jacobian_log(tau, a, b, c):
    """d(model)/d(log params) for the decaying Hill function."""
    u = np.where(tau > 0.0, tau ** a, 0.0)
    v = b ** a
    d = u + v
    dm_dc = v / d
    dm_db = c * u * (a * v / b) / (d * d)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(tau > 0.0, np.log(b) - np.log(tau), 0.0)
    dm_da = c * u * v * log_ratio / (d * d)
    return np.column_stack([dm_da * a, dm_db * b, dm_dc * c])


def _lm_hill(tau, y, p0, max_iter: int = 200, tol: float = 1e-8):
    """Damped least squares on log-parameters, keeping a, b, c positive."""
    theta = np.log(np.asarray(p0, dtype=np.float64))
    a, b, c = np.exp(theta)
    r = hill_decay(tau, a, b, c) - y
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    for _ in range(max_iter):
        jac = _hill_jacobian_log(tau, a, b, c)
        g = jac.T @ r
        h = jac.T @ jac
        diag = np.diag(h).copy()
        diag[diag <= 0.0] = 1e-12
        while True:
            try:
                step = np.linalg.solve(h + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = theta + step
                ta, tb, tc = np.exp(trial)
                rt = hill_decay(tau, ta, tb, tc) - y
                trial_cost = 0.5 * float(rt @ rt)
                if np.isfinite(trial_cost) and trial_cost <= cost:
                    break
            lam *= 3.0
            if lam > 1e12:
                raise FitDiverged("damping exhausted without improvement")
        improvement = cost - trial_cost
        theta, r, (a, b, c) = trial, rt, (ta, tb, tc)
        cost = trial_cost
        lam = max(lam / 3.0, 1e-12)
        if np.linalg.norm(step) < tol or improvement <= tol * tol * (1.0 + cost):
            return (a, b, c), float(np.sqrt(2.0 * cost / tau.size))
    raise FitDiverged(f"no convergence within {max_iter} iterations")


def fit_decay(times_s, flows_lps, t_peak_s: float, peak_flow_lps: float
              ) -> tuple[tuple[float, float, float], float]:
    """Nonlinear least-squares Hill fit of the post-peak segment.

    Returns ((steepness, half_time_s, peak_lps), residual RMS).  Initial
    guesses: steepness 2, half-time read from where the data first drops
    below half the peak, peak = observed peak flow.
    """
    t = np.asarray(times_s, dtype=np.float64)
    y = np.asarray(flows_lps, dtype=np.float64)
    if t.size < 3:
        raise FitDiverged("need at least three points after the peak")
    if peak_flow_lps <= 0.0:
        raise FitDiverged("peak flow must be positive")
    tau = t - t_peak_s

    half = peak_flow_lps / 2.0
    below = np.nonzero(y <= half)[0]
    if below.size and below[0] > 0:
        i = below[0]
        frac = (y[i - 1] - half) / max(y[i - 1] - y[i], 1e-12)
        b0 = tau[i - 1] + frac * (tau[i] - tau[i - 1])
    elif below.size:
        b0 = max(tau[below[0]], 1e-3)
    else:
        b0 = tau[-1] / 2.0  # never halves within the data; guess mid-span
    b0 = max(b0, 1e-3)

    return _lm_hill(tau, y, (2.0, b0, peak_flow_lps))


@dataclass(frozen=True)
class ManeuverFit:
    """Fitted piecewise model: origin line, cubic rise, Hill decay."""

    t0_s: float
    linear_slope_lps_per_s: float
    cubic: tuple[float, float, float, float]
    hill: tuple[float, float, float]  # (steepness, half_time_s, peak_lps)
    t_peak_s: float
    t_end_s: float
    rise_start_s: float
    rise_residual_rms: float
    decay_residual_rms: float
    junction_gap_lps: float
    quality_flags: tuple[str, ...] = ()
    fit_log: tuple[str, ...] = ()

    def __post_init__(self):
        a, b, c = self.hill
        if not (a > 0 and b > 0 and c > 0):
            raise ValueError("hill parameters must be positive")
        if not self.t0_s <= self.rise_start_s <= self.t_peak_s < self.t_end_s:
            raise ValueError("maneuver times out of order")


def _tail_duration(steepness: float, half_time: float) -> float:
    """Time after the peak for the Hill tail to reach the 0.5% floor."""
    ratio = 1.0 / TAIL_FLOW_FRACTION - 1.0
    return half_time * ratio ** (1.0 / steepness)


def fit_maneuver(curve: FlowCurve) -> ManeuverFit:
    """Fit the full piecewise model to a measured flow curve."""
    t_peak, peak_flow = find_peak(curve)
    t = curve.times_s
    y = curve.flows_lps
    rise_mask = t <= t_peak
    decay_mask = t >= t_peak

    cubic, rise_rms, flags = fit_rise(t[rise_mask], y[rise_mask])
    hill, decay_rms = fit_decay(t[decay_mask], y[decay_mask], t_peak, peak_flow)

    rise_start = float(t[rise_mask][0])
    n_onset = min(3, int(rise_mask.sum()))
    t0_raw = -np.inf
    if n_onset >= 2:
        slope, icept = np.polyfit(t[rise_mask][:n_onset], y[rise_mask][:n_onset], 1)
        if slope > 1e-12:
            t0_raw = -icept / slope
    t0 = float(min(max(t0_raw, rise_start - ONSET_LOOKBACK_S, 0.0), rise_start))

    rise_first_flow = float(np.polyval(cubic, rise_start))
    if rise_start > t0:
        linear_slope = max(rise_first_flow, 0.0) / (rise_start - t0)
    else:
        linear_slope = 0.0

    t_end = min(t_peak + _tail_duration(hill[0], hill[1]), t0 + HARD_CAP_S)
    if t_end <= t_peak:
        t_end = t_peak + 1e-3

    junction_gap = abs(float(np.polyval(cubic, t_peak)) - hill[2])
    if junction_gap > JUNCTION_TOLERANCE * peak_flow:
        flags = flags + (FLAG_JUNCTION_GAP,)

    log = (
        f"rise: cubic least squares on {int(rise_mask.sum())} points",
        f"decay: hill fit on {int(decay_mask.sum())} points, "
        f"steepness={hill[0]:.4g} half_time_s={hill[1]:.4g} peak_lps={hill[2]:.4g}",
        "decay form fixes flow(t_peak)=peak and flow(t_peak+half_time)=peak/2",
        f"onset: linear segment from t0={t0:.4g}s to first rise point",
        f"tail: extended to {TAIL_FLOW_FRACTION:.1%} of peak, "
        f"capped at {HARD_CAP_S:.0f}s",
    )
    return ManeuverFit(
        t0_s=t0,
        linear_slope_lps_per_s=float(linear_slope),
        cubic=tuple(float(v) for v in cubic),
        hill=hill,
        t_peak_s=t_peak,
        t_end_s=float(t_end),
        rise_start_s=rise_start,
        rise_residual_rms=rise_rms,
        decay_residual_rms=decay_rms,
        junction_gap_lps=junction_gap,
        quality_flags=curve.quality_flags + flags,
        fit_log=log,
    )


def evaluate_fit(fit: ManeuverFit, times_s) -> np.ndarray:
    """Piecewise model values, clamped at zero."""
    t = np.asarray(times_s, dtype=np.float64)
    out = np.zeros(t.shape)

    on_line = (t >= fit.t0_s) & (t < fit.rise_start_s)
    out[on_line] = fit.linear_slope_lps_per_s * (t[on_line] - fit.t0_s)

    on_rise = (t >= fit.rise_start_s) & (t <= fit.t_peak_s)
    out[on_rise] = np.polyval(fit.cubic, t[on_rise])

    on_decay = t > fit.t_peak_s
    out[on_decay] = hill_decay(t[on_decay] - fit.t_peak_s, *fit.hill)
    return np.maximum(out, 0.0)


def extrapolate(fit: ManeuverFit, dt_s: float = 0.001) -> FlowCurve:
    """Sample the fitted model on a uniform grid from t0 to t_end.

    The step is adjusted (by at most half a step over the whole span) so
    the grid lands exactly on t_end; integrals are then insensitive to the
    requested resolution beyond the quadrature error itself.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    span = fit.t_end_s - fit.t0_s
    n = max(2, int(round(span / dt_s)))
    times = fit.t0_s + np.arange(n + 1) * (span / n)
    return FlowCurve(times_s=times, flows_lps=evaluate_fit(fit, times),
                     quality_flags=fit.quality_flags)
