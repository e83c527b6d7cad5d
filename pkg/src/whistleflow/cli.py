"""Command-line front end: analyze recordings, fit calibrations, synthesize.

Exit codes: 0 success, 2 input/config error, 3 analysis failure.  Failures
also produce a machine-readable JSON blob (error.json inside the output
directory for analyze, stderr for the other commands) so callers never
have to parse log text.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import calibration as cal
from .audio import decode_wav, write_wav
from .errors import WhistleflowError
from .maneuver import fit_maneuver
from .plots import render_report_plots
from .report import compute_report, select_best_trial, validate_report
from .synth import (
    AMPLITUDE_CONSTANT,
    AMPLITUDE_PROPORTIONAL,
    ReferenceProfile,
    SynthProfile,
    synthesize_whistle,
)
from .trace import AnalysisConfig, analyze_frequency, export_trace_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ANALYSIS = 3

_CONFIG_TYPES = {
    "window": int,
    "hop": int,
    "rolloff_fraction": float,
    "loudness_floor_db": float,
    "prominence_floor_db": float,
    "smooth_window": int,
    "grid_ms": float,
    "seed": int,
}


def _load_config_file(path):
    """key = value lines; '#' starts a comment."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_TYPES:
            raise ValueError(f"unknown config key: {key}")
        values[key] = _CONFIG_TYPES[key](val)
    return values


def _resolve(args) -> dict:
    """Merge flag / config-file / default values (flags win)."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
    defaults = {
        "window": 2048, "hop": None, "rolloff_fraction": 0.85,
        "loudness_floor_db": -35.0, "prominence_floor_db": 20.0,
        "smooth_window": 5, "grid_ms": 1.0, "seed": 0,
    }
    out = {}
    for key, fallback in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else file_values.get(key, fallback)
    return out


def _analysis_config(opts: dict) -> AnalysisConfig:
    return AnalysisConfig(
        window_len=opts["window"],
        hop=opts["hop"],
        rolloff_fraction=opts["rolloff_fraction"],
        loudness_floor_db=opts["loudness_floor_db"],
        prominence_floor_db=opts["prominence_floor_db"],
        smooth_window=opts["smooth_window"],
    )


def _emit_error(code: str, message: str, out_dir=None) -> None:
    blob = json.dumps({"error": code, "message": message})
    print(blob, file=sys.stderr)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(blob + "\n")


def _analyze_one(wav_path, model, config, grid_s):
    clip = decode_wav(Path(wav_path).read_bytes())
    trace = analyze_frequency(clip, config)
    flow = cal.freq_to_flow(model, trace)
    fit = fit_maneuver(flow)
    report = compute_report(fit, model.device_profile_id, grid_s=grid_s,
                            metadata=dict(trace.metadata, source=str(wav_path)))
    return trace, flow, report


def cmd_analyze(args) -> int:
    out_dir = Path(args.out)
    try:
        opts = _resolve(args)
    except (OSError, ValueError) as exc:
        _emit_error("bad_config", str(exc), out_dir)
        return EXIT_INPUT

    cal_path = Path(args.calibration)
    if not cal_path.exists():
        _emit_error("calibration_not_found", f"no such file: {cal_path}", out_dir)
        return EXIT_INPUT
    try:
        model = cal.load_profile(cal_path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        _emit_error("calibration_invalid", str(exc), out_dir)
        return EXIT_INPUT

    for wav in args.wav:
        if not Path(wav).exists():
            _emit_error("input_not_found", f"no such file: {wav}", out_dir)
            return EXIT_INPUT

    config = _analysis_config(opts)
    grid_s = opts["grid_ms"] / 1000.0

    results, failures = [], []
    with ThreadPoolExecutor(max_workers=min(4, len(args.wav))) as pool:
        def run(path):
            try:
                return path, _analyze_one(path, model, config, grid_s), None
            except WhistleflowError as exc:
                return path, None, exc

        for path, result, exc in pool.map(run, args.wav):
            if exc is None:
                results.append((path, result))
            else:
                failures.append((path, exc))

    if not results:
        code = failures[0][1].code if failures else "no_trace"
        _emit_error(code, "; ".join(f"{p}: {e}" for p, e in failures), out_dir)
        return EXIT_ANALYSIS

    best = select_best_trial([(trace, rep) for _, (trace, _, rep) in results])
    _, (trace, flow, report) = results[best]
    report.pipeline_metadata["trials"] = {
        "count": len(results),
        "best_index": best,
        "peak_freqs_hz": [t.peak_freq_hz for _, (t, _, _) in results],
        "sources": [str(p) for p, _ in results],
        "failed": [{"source": str(p), "error": e.code} for p, e in failures],
    }

    out_dir.mkdir(parents=True, exist_ok=True)
    report_dict = report.to_json_dict()
    validate_report(report_dict)
    (out_dir / "report.json").write_text(json.dumps(report_dict, indent=2) + "\n")
    export_trace_csv(trace, out_dir / "trace.csv")
    with open(out_dir / "flow_time.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time_s", "flow_lps"])
        for t, q in zip(report.volume_time["times_s"],
                        report.flow_volume["flow_lps"]):
            writer.writerow([f"{t:.6f}", f"{q:.6f}"])
    render_report_plots(report, out_dir)
    print(f"report written to {out_dir / 'report.json'}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        opts = _resolve(args)
        rows = list(csv.DictReader(open(args.csv, newline="")))
    except OSError as exc:
        _emit_error("input_not_found", str(exc))
        return EXIT_INPUT
    except ValueError as exc:
        _emit_error("bad_config", str(exc))
        return EXIT_INPUT

    if not rows:
        _emit_error("insufficient_data", "empty calibration CSV")
        return EXIT_INPUT

    config = _analysis_config(opts)
    points = []
    try:
        for row in rows:
            flow = float(row["flow_lps"])
            if "freq_hz" in row and row["freq_hz"]:
                points.append((flow, float(row["freq_hz"])))
            elif "wav_path" in row and row["wav_path"]:
                clip = decode_wav(Path(row["wav_path"]).read_bytes())
                trace = analyze_frequency(clip, config)
                points.append((flow, float(np.median(trace.freqs_hz))))
            else:
                raise ValueError("row needs a freq_hz or wav_path column")
    except (KeyError, ValueError, OSError) as exc:
        _emit_error("bad_csv", str(exc))
        return EXIT_INPUT
    except WhistleflowError as exc:
        _emit_error(exc.code, str(exc))
        return EXIT_INPUT

    try:
        model = cal.fit_calibration(points, device_profile_id=args.device_id)
    except WhistleflowError as exc:
        _emit_error(exc.code, str(exc))
        return EXIT_INPUT

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cal.save_profile(model, out)
    print(f"slope={model.slope_hz_per_lps:.6g} Hz/(L/s)  "
          f"intercept={model.intercept_hz:.6g} Hz  r2={model.r_squared:.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        opts = _resolve(args)
        profile = ReferenceProfile(
            pefr_lps=args.pefr, t_peak_s=args.t_peak, steepness=args.steepness,
            half_decay_s=args.half_decay, duration_s=args.duration,
        )
        model = cal.CalibrationModel(
            slope_hz_per_lps=args.slope, intercept_hz=args.intercept,
            r_squared=1.0, residual_std_hz=0.0,
            flow_range_lps=(0.0, args.pefr), device_profile_id="synthetic",
        )
        synth = SynthProfile(
            flow_curve=profile.sample(),
            calibration=model,
            snr_db=args.snr_db,
            amplitude_model=args.amplitude_model,
        )
        clip = synthesize_whistle(synth, sample_rate_hz=args.sample_rate,
                                  seed=opts["seed"])
    except (WhistleflowError, ValueError) as exc:
        code = exc.code if isinstance(exc, WhistleflowError) else "invalid_params"
        _emit_error(code, str(exc))
        return EXIT_INPUT

    out = Path(args.out_wav)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_wav(out, clip)
    truth = {
        "parameters": {
            "pefr_lps": args.pefr, "t_peak_s": args.t_peak,
            "steepness": args.steepness, "half_decay_s": args.half_decay,
            "duration_s": args.duration,
        },
        "calibration": model.to_json_dict(),
        "snr_db": args.snr_db,
        "amplitude_model": args.amplitude_model,
        "sample_rate_hz": args.sample_rate,
        "seed": opts["seed"],
        "fvc_l": profile.fvc_l(),
        "fev1_l": profile.fev1_l(),
        "pefr_lps": args.pefr,
    }
    out.with_suffix(".json").write_text(json.dumps(truth, indent=2) + "\n")
    print(f"wav written to {out}")
    return EXIT_OK


def _add_common_flags(parser):
    parser.add_argument("--config", help="key=value override file")
    parser.add_argument("--window", type=int, help="STFT window length, samples")
    parser.add_argument("--hop", type=int, help="STFT hop, samples")
    parser.add_argument("--rolloff-fraction", type=float, dest="rolloff_fraction")
    parser.add_argument("--loudness-floor-db", type=float,
                        dest="loudness_floor_db")
    parser.add_argument("--prominence-floor-db", type=float,
                        dest="prominence_floor_db")
    parser.add_argument("--smooth-window", type=int, dest="smooth_window")
    parser.add_argument("--grid-ms", type=float, dest="grid_ms",
                        help="report resampling step, milliseconds")
    parser.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whistleflow",
        description="Acoustic spirometry: whistle recordings to lung "
                    "function reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full pipeline over one or more trials")
    p.add_argument("wav", nargs="+", help="trial recordings (best is selected)")
    p.add_argument("--calibration", required=True, help="profile JSON path")
    p.add_argument("--out", required=True, help="output directory")
    _add_common_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="fit a frequency/flow profile")
    p.add_argument("csv", help="columns: flow_lps + freq_hz or wav_path")
    p.add_argument("--out", required=True, help="profile JSON output path")
    p.add_argument("--device-id", default="default", dest="device_id")
    _add_common_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth", help="generate a synthetic whistle fixture")
    p.add_argument("out_wav", help="output WAV path")
    p.add_argument("--pefr", type=float, default=8.0)
    p.add_argument("--t-peak", type=float, default=0.1, dest="t_peak")
    p.add_argument("--steepness", type=float, default=3.0)
    p.add_argument("--half-decay", type=float, default=0.8, dest="half_decay")
    p.add_argument("--duration", type=float, default=6.0)
    p.add_argument("--slope", type=float, default=400.0)
    p.add_argument("--intercept", type=float, default=200.0)
    p.add_argument("--snr-db", type=float, default=30.0, dest="snr_db")
    p.add_argument("--amplitude-model", default=AMPLITUDE_PROPORTIONAL,
                   choices=[AMPLITUDE_CONSTANT, AMPLITUDE_PROPORTIONAL],
                   dest="amplitude_model")
    p.add_argument("--sample-rate", type=int, default=44100, dest="sample_rate")
    _add_common_flags(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
