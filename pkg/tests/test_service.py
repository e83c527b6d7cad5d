"""Trial ingestion: file-backed store semantics and the HTTP surface."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from whistleflow.audio import encode_wav_pcm16
from whistleflow.calibration import CalibrationModel
from whistleflow.errors import NotFound, UnknownCalibration
from whistleflow.report import validate_report
from whistleflow.service import TrialStore, create_app
from whistleflow.synth import ReferenceProfile, SynthProfile, synthesize_whistle

CAL = CalibrationModel(slope_hz_per_lps=400.0, intercept_hz=200.0,
                       r_squared=1.0, residual_std_hz=0.0,
                       flow_range_lps=(0.0, 10.0),
                       device_profile_id="bench")


def whistle_bytes(pefr=6.0, seed=0):
    profile = ReferenceProfile(pefr_lps=pefr, t_peak_s=0.2, steepness=2.5,
                               half_decay_s=0.6, duration_s=3.0)
    clip = synthesize_whistle(
        SynthProfile(flow_curve=profile.sample(), calibration=CAL,
                     snr_db=35.0),
        44100, seed=seed)
    return encode_wav_pcm16(clip.samples, 44100)


SILENT = encode_wav_pcm16(np.zeros(44100), 44100)


@pytest.fixture()
def store(tmp_path):
    s = TrialStore(tmp_path / "store")
    s.register_calibration(CAL, "bench")
    return s


class TestStore:
    def test_submit_produces_done_report(self, store):
        trial_id = store.submit_trial("alice", whistle_bytes(), "bench")
        record = store.get_report(trial_id)
        assert record["status"] == "done"
        assert record["subject_id"] == "alice"
        assert record["peak_freq_hz"] > 2000.0
        validate_report(record["report"])
        assert record["report"]["fvc_l"] > 0

    def test_unknown_calibration_persists_nothing(self, store):
        with pytest.raises(UnknownCalibration):
            store.submit_trial("alice", whistle_bytes(), "nope")
        assert list(store.subjects_dir.glob("*/*")) == []

    def test_bad_audio_rejected(self, store):
        from whistleflow.errors import BadAudio

        with pytest.raises(BadAudio):
            store.submit_trial("alice", b"not a wav at all", "bench")

    def test_silent_wav_persists_error_record(self, store):
        trial_id = store.submit_trial("alice", SILENT, "bench")
        record = store.get_report(trial_id)
        assert record["status"] == "error"
        assert record["error_code"] == "no_trace"
        assert record["report"] is None

    def test_get_report_unknown_id(self, store):
        with pytest.raises(NotFound):
            store.get_report("doesnotexist")

    def test_repeated_reads_identical(self, store):
        trial_id = store.submit_trial("alice", whistle_bytes(), "bench")
        a = json.dumps(store.get_report(trial_id), sort_keys=True)
        b = json.dumps(store.get_report(trial_id), sort_keys=True)
        assert a == b

    def test_list_trials_marks_best_by_peak_frequency(self, store):
        ids = [store.submit_trial("bob", whistle_bytes(p, seed=i), "bench")
               for i, p in enumerate((5.0, 8.0, 6.5))]
        listing = store.list_trials("bob")
        assert len(listing) == 3
        # reverse chronological: latest first
        assert [item["trial_id"] for item in listing] == ids[::-1]
        best = [item for item in listing if item["best"]]
        assert len(best) == 1
        assert best[0]["trial_id"] == ids[1]  # pefr 8 -> highest pitch

    def test_error_trials_not_eligible_for_best(self, store):
        good = store.submit_trial("carol", whistle_bytes(5.0), "bench")
        store.submit_trial("carol", SILENT, "bench")
        listing = store.list_trials("carol")
        best = [item for item in listing if item["best"]]
        assert len(best) == 1 and best[0]["trial_id"] == good

    def test_unknown_subject_empty_list(self, store):
        assert store.list_trials("nobody") == []


class TestHttp:
    def test_submit_and_fetch(self, store):
        client = TestClient(create_app(store))
        resp = client.post("/v1/trials",
                           data={"subject_id": "dan",
                                 "calibration_id": "bench"},
                           files={"audio": ("t.wav", whistle_bytes(),
                                            "audio/wav")})
        assert resp.status_code == 201
        trial_id = resp.json()["trial_id"]

        got = client.get(f"/v1/trials/{trial_id}")
        assert got.status_code == 200
        record = got.json()
        assert record["trial_id"] == trial_id
        validate_report(record["report"])

        listing = client.get("/v1/subjects/dan/trials")
        assert listing.status_code == 200
        assert listing.json()[0]["trial_id"] == trial_id

    def test_unknown_trial_404(self, store):
        client = TestClient(create_app(store))
        resp = client.get("/v1/trials/missing")
        assert resp.status_code == 404
        assert resp.json()["error"] == "not_found"

    def test_unknown_calibration_422(self, store):
        client = TestClient(create_app(store))
        resp = client.post("/v1/trials",
                           data={"subject_id": "eve",
                                 "calibration_id": "ghost"},
                           files={"audio": ("t.wav", whistle_bytes(),
                                            "audio/wav")})
        assert resp.status_code == 422
        assert resp.json()["error"] == "unknown_calibration"

    def test_garbage_audio_422(self, store):
        client = TestClient(create_app(store))
        resp = client.post("/v1/trials",
                           data={"subject_id": "eve",
                                 "calibration_id": "bench"},
                           files={"audio": ("t.wav", b"\x00\x01garbage",
                                            "audio/wav")})
        assert resp.status_code == 422
        assert resp.json()["error"] == "bad_audio"

    def test_error_trial_still_fetchable(self, store):
        client = TestClient(create_app(store))
        resp = client.post("/v1/trials",
                           data={"subject_id": "fay",
                                 "calibration_id": "bench"},
                           files={"audio": ("s.wav", SILENT, "audio/wav")})
        assert resp.status_code == 201
        record = client.get(f"/v1/trials/{resp.json()['trial_id']}").json()
        assert record["status"] == "error"
        assert record["error_code"] == "no_trace"


class TestDurability:
    def test_restart_preserves_records(self, tmp_path):
        root = tmp_path / "store"
        store = TrialStore(root)
        store.register_calibration(CAL, "bench")
        ids = [store.submit_trial("gus", whistle_bytes(5.0 + i * 0.5, seed=i),
                                  "bench") for i in range(4)]
        before = {i: json.dumps(store.get_report(i), sort_keys=True)
                  for i in ids}
        best_before = [x["trial_id"] for x in store.list_trials("gus")
                       if x["best"]]

        reborn = TrialStore(root)  # fresh instance over the same directory
        for trial_id in ids:
            assert json.dumps(reborn.get_report(trial_id),
                              sort_keys=True) == before[trial_id]
        best_after = [x["trial_id"] for x in reborn.list_trials("gus")
                      if x["best"]]
        assert best_after == best_before

    def test_store_is_append_only(self, tmp_path):
        root = tmp_path / "store"
        store = TrialStore(root)
        store.register_calibration(CAL, "bench")
        first = store.submit_trial("hal", whistle_bytes(), "bench")
        snapshot = json.dumps(store.get_report(first), sort_keys=True)
        second = store.submit_trial("hal", whistle_bytes(seed=5), "bench")
        assert second != first
        assert json.dumps(store.get_report(first),
                          sort_keys=True) == snapshot
