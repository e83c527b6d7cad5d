"""Trial-ingestion service: upload a recording, get a spirometry report back.

The store is plain files (one directory per subject, one JSON + WAV per
trial) so records survive restarts and stay auditable.  Analysis runs
synchronously inside the request; the record keeps a status field so an
asynchronous variant would not need a schema change.
"""

from __future__ import annotations

import json
import threading
import uuid
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse

from .audio import decode_wav
from .calibration import CalibrationModel, freq_to_flow, load_profile, save_profile
from .errors import (
    BadAudio,
    MalformedFile,
    NotFound,
    UnknownCalibration,
    UnsupportedEncoding,
    WhistleflowError,
)
from .maneuver import fit_maneuver
from .report import compute_report
from .trace import AnalysisConfig, analyze_frequency

STATUS_DONE = "done"
STATUS_ERROR = "error"


class TrialStore:
    """File-backed trial records with per-subject write serialization."""

    def __init__(self, root, config: AnalysisConfig | None = None):
        self.root = Path(root)
        self.subjects_dir = self.root / "subjects"
        self.calibrations_dir = self.root / "calibrations"
        self.subjects_dir.mkdir(parents=True, exist_ok=True)
        self.calibrations_dir.mkdir(parents=True, exist_ok=True)
        self.config = config or AnalysisConfig()
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def _subject_lock(self, subject_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[subject_id]

    # calibrations -------------------------------------------------------
    def register_calibration(self, model: CalibrationModel,
                             calibration_id: str | None = None) -> str:
        cal_id = calibration_id or model.device_profile_id
        save_profile(model, self.calibrations_dir / f"{cal_id}.json")
        return cal_id

    def get_calibration(self, calibration_id: str) -> CalibrationModel:
        path = self.calibrations_dir / f"{calibration_id}.json"
        if not path.exists():
            raise UnknownCalibration(f"no calibration {calibration_id!r}")
        return load_profile(path)

    # trials -------------------------------------------------------------
    def submit_trial(self, subject_id: str, wav_bytes: bytes,
                     calibration_id: str) -> str:
        model = self.get_calibration(calibration_id)  # before any persistence
        try:
            clip = decode_wav(wav_bytes)
        except (MalformedFile, UnsupportedEncoding) as exc:
            raise BadAudio(str(exc)) from exc

        trial_id = uuid.uuid4().hex[:16]
        record = {
            "trial_id": trial_id,
            "subject_id": subject_id,
            "received_at": datetime.now(timezone.utc).isoformat(),
            "calibration_id": calibration_id,
            "audio_ref": f"subjects/{subject_id}/{trial_id}.wav",
            "status": STATUS_DONE,
            "error_code": None,
            "peak_freq_hz": None,
            "report": None,
        }
        try:
            trace = analyze_frequency(clip, self.config)
            flow = freq_to_flow(model, trace)
            fit = fit_maneuver(flow)
            report = compute_report(fit, calibration_id,
                                    metadata=dict(trace.metadata))
            record["peak_freq_hz"] = trace.peak_freq_hz
            record["report"] = report.to_json_dict()
        except WhistleflowError as exc:
            record["status"] = STATUS_ERROR
            record["error_code"] = exc.code

        with self._subject_lock(subject_id):
            subject_dir = self.subjects_dir / subject_id
            subject_dir.mkdir(parents=True, exist_ok=True)
            (subject_dir / f"{trial_id}.wav").write_bytes(wav_bytes)
            with open(subject_dir / f"{trial_id}.json", "w") as handle:
                json.dump(record, handle, indent=2)
        return trial_id

    def get_report(self, trial_id: str) -> dict:
        matches = list(self.subjects_dir.glob(f"*/{trial_id}.json"))
        if not matches:
            raise NotFound(f"no trial {trial_id!r}")
        with open(matches[0]) as handle:
            return json.load(handle)

    def list_trials(self, subject_id: str) -> list:
        """Reverse-chronological summaries; exactly one done trial (the one
        with the highest peak frequency) carries best=True."""
        subject_dir = self.subjects_dir / subject_id
        records = []
        if subject_dir.is_dir():
            for path in subject_dir.glob("*.json"):
                with open(path) as handle:
                    records.append(json.load(handle))
        records.sort(key=lambda r: r["received_at"])

        best_id = None
        best_peak = -float("inf")
        for rec in records:  # chronological scan: earliest wins ties
            if rec["status"] == STATUS_DONE and rec["peak_freq_hz"] is not None:
                if rec["peak_freq_hz"] > best_peak:
                    best_peak = rec["peak_freq_hz"]
                    best_id = rec["trial_id"]

        records.reverse()
        return [
            {
                "trial_id": rec["trial_id"],
                "subject_id": rec["subject_id"],
                "received_at": rec["received_at"],
                "status": rec["status"],
                "error_code": rec["error_code"],
                "peak_freq_hz": rec["peak_freq_hz"],
                "best": rec["trial_id"] == best_id,
            }
            for rec in records
        ]


def create_app(store: TrialStore) -> FastAPI:
    """FastAPI application over a trial store."""
    app = FastAPI(title="whistleflow trial ingestion")

    @app.post("/v1/trials", status_code=201)
    async def submit_trial(subject_id: str = Form(...),
                           calibration_id: str = Form(...),
                           audio: UploadFile = File(...)):
        payload = await audio.read()
        try:
            trial_id = store.submit_trial(subject_id, payload, calibration_id)
        except (BadAudio, UnknownCalibration) as exc:
            return JSONResponse(status_code=422,
                                content={"error": exc.code,
                                         "message": str(exc)})
        return {"trial_id": trial_id}

    @app.get("/v1/trials/{trial_id}")
    def get_trial(trial_id: str):
        try:
            return store.get_report(trial_id)
        except NotFound as exc:
            return JSONResponse(status_code=404,
                                content={"error": exc.code,
                                         "message": str(exc)})

    @app.get("/v1/subjects/{subject_id}/trials")
    def list_subject_trials(subject_id: str):
        return store.list_trials(subject_id)

    return app


def main(argv=None) -> None:
    """Run the service: python -m whistleflow.service STORE_DIR [PORT]."""
    import sys

    import uvicorn

    args = argv if argv is not None else sys.argv[1:]
    root = args[0] if args else "./whistleflow-store"
    port = int(args[1]) if len(args) > 1 else 8000
    uvicorn.run(create_app(TrialStore(root)), host="127.0.0.1", port=port)


if __name__ == "__main__":
    main()
