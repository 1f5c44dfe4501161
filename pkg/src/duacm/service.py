"""HTTP service for the interactive rule-out console.

All risk math happens server-side in exact enumeration mode, so interactive
updates are jitter-free. Sessions live in memory with an idle timeout; one
lock per session serializes its mutations while distinct sessions proceed in
parallel. The model bundle is never mutated.

Every payload carries ``schema_version``. Errors: 404 for unknown patients or
sessions, 409 for illegal mutations (the inference error message is passed
through), 400 for malformed bodies.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .cohort import Cohort
from .inference import (
    DuConfig,
    InferenceError,
    RuleOutSession,
    confirm,
    explain,
    open_session,
    pessimistic_delta,
    reset,
    rule_out,
)
from .modelio import ModelBundle

WIRE_SCHEMA_VERSION = 1


@dataclass
class _SessionSlot:
    session: RuleOutSession
    patient_id: int
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)


class SessionStore:
    """In-memory sessions with idle expiry and per-session mutation locks."""

    def __init__(self, timeout_seconds=1800.0, clock=time.monotonic):
        self.timeout = timeout_seconds
        self._clock = clock
        self._slots: dict[str, _SessionSlot] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def _purge(self):
        now = self._clock()
        dead = [sid for sid, slot in self._slots.items()
                if now - slot.last_access > self.timeout]
        for sid in dead:
            del self._slots[sid]

    def create(self, session: RuleOutSession, patient_id: int) -> str:
        with self._lock:
            self._purge()
            self._counter += 1
            sid = f"s{self._counter:06d}"
            session.session_id = sid
            self._slots[sid] = _SessionSlot(session, patient_id,
                                            last_access=self._clock())
            return sid

    def get(self, sid: str) -> _SessionSlot:
        with self._lock:
            self._purge()
            slot = self._slots.get(sid)
            if slot is None:
                raise KeyError(sid)
            slot.last_access = self._clock()
            return slot

    def mutate(self, sid: str, op):
        """Apply ``op(session)`` under the session's lock (single writer)."""
        slot = self.get(sid)
        with slot.lock:
            result = op(slot.session)
            slot.last_access = self._clock()
            return result


def risk_payload(dist, vocabulary, top_k=None, driver_threshold=0.05):
    exp = explain(dist, top_k=(top_k if top_k is not None else len(vocabulary)),
                  driver_threshold=driver_threshold)
    drivers = set(exp.drivers)
    entries = [
        {
            "diagnosis": d,
            "name": vocabulary[d],
            "probability": p,
            "conditional_risk": r,
            "is_driver": d in drivers,
        }
        for d, p, r in exp.entries
    ]
    return {
        "mode": dist.mode,
        "mean": dist.mean,
        "quantiles": {str(q): v for q, v in sorted(dist.quantiles.items())},
        "delta": pessimistic_delta(dist),
        "entries": entries,
        "warnings": list(dist.warnings),
    }


def session_payload(slot: _SessionSlot, vocabulary):
    session = slot.session
    return {
        "schema_version": WIRE_SCHEMA_VERSION,
        "session_id": session.session_id,
        "patient_id": slot.patient_id,
        "excluded": sorted(session.excluded),
        "confirmed": session.confirmed,
        "risk": risk_payload(session.current, vocabulary),
    }


class SessionRequest(BaseModel):
    patient_id: int


class RuleOutRequest(BaseModel):
    diagnoses: list[int]


class ConfirmRequest(BaseModel):
    diagnosis: int


def create_app(bundle: ModelBundle, cohort: Cohort, session_timeout_minutes=30.0,
               static_dir=None) -> FastAPI:
    app = FastAPI(title="duacm", version=str(WIRE_SCHEMA_VERSION))
    store = SessionStore(timeout_seconds=session_timeout_minutes * 60.0)
    vocabulary = list(bundle.vocabulary)
    id_to_row = {int(pid): i for i, pid in enumerate(cohort.ids)}

    # Precompute the browse table once: exact-mode mean / Q90 / delta per patient.
    base = bundle.outcome_model.base_scores(cohort.features)
    offsets = np.array([bundle.outcome_model.offset_for(d)[0]
                        for d in range(len(vocabulary))])
    risks_matrix = 1.0 / (1.0 + np.exp(-(base[:, None] + offsets[None, :])))
    from .diagmodel import predict_diagnosis_batch
    posterior = predict_diagnosis_batch(bundle.diagnosis_model, cohort.features)
    from .inference import weighted_lower_quantile
    summaries = []
    for i in range(len(cohort)):
        mean = float(posterior[i] @ risks_matrix[i])
        q50 = weighted_lower_quantile(risks_matrix[i], posterior[i], 0.5)
        q90 = weighted_lower_quantile(risks_matrix[i], posterior[i], 0.9)
        d = int(cohort.diagnosis[i])
        summaries.append({
            "id": int(cohort.ids[i]),
            "mean": mean,
            "q50": q50,
            "q90": q90,
            "delta": q90 - mean,
            "recorded_diagnosis": cohort.diagnosis_vocab[d] if d >= 0 else None,
        })

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={
            "schema_version": WIRE_SCHEMA_VERSION, "error": str(exc.errors()),
        })

    def error(status, message):
        return JSONResponse(status_code=status, content={
            "schema_version": WIRE_SCHEMA_VERSION, "error": message,
        })

    @app.get("/api/health")
    def health():
        return {
            "schema_version": WIRE_SCHEMA_VERSION,
            "status": "ok",
            "n_patients": len(cohort),
            "n_diagnoses": len(vocabulary),
        }

    @app.get("/api/vocabulary")
    def get_vocabulary():
        return {"schema_version": WIRE_SCHEMA_VERSION, "diagnoses": vocabulary}

    @app.get("/api/patients")
    def list_patients(sort: str = "delta", search: str = "", limit: int = 100):
        rows = summaries
        if search:
            rows = [r for r in rows if search in str(r["id"])]
        key = {
            "delta": lambda r: (-r["delta"], r["id"]),
            "mean": lambda r: (-r["mean"], r["id"]),
            "q90": lambda r: (-r["q90"], r["id"]),
            "id": lambda r: r["id"],
        }.get(sort)
        if key is None:
            return error(400, f"unknown sort key {sort!r}")
        rows = sorted(rows, key=key)[: max(0, limit)]
        return {"schema_version": WIRE_SCHEMA_VERSION, "patients": rows,
                "total": len(summaries)}

    @app.get("/api/patients/{patient_id}")
    def get_patient(patient_id: int):
        row = id_to_row.get(patient_id)
        if row is None:
            return error(404, f"unknown patient {patient_id}")
        features = {
            name: float(cohort.features[row, j])
            for j, name in enumerate(cohort.schema.names)
        }
        return {
            "schema_version": WIRE_SCHEMA_VERSION,
            "patient": {**summaries[row], "features": features},
        }

    @app.post("/api/patients/{patient_id}/predict")
    def predict_patient(patient_id: int):
        row = id_to_row.get(patient_id)
        if row is None:
            return error(404, f"unknown patient {patient_id}")
        from .inference import du_predict
        dist = du_predict(bundle.outcome_model, bundle.diagnosis_model,
                          cohort.features[row], DuConfig(mode="exact"))
        return {"schema_version": WIRE_SCHEMA_VERSION, "patient_id": patient_id,
                "risk": risk_payload(dist, vocabulary)}

    @app.post("/api/sessions")
    def create_session(body: SessionRequest):
        row = id_to_row.get(body.patient_id)
        if row is None:
            return error(404, f"unknown patient {body.patient_id}")
        session = open_session(bundle.outcome_model, bundle.diagnosis_model,
                               cohort.features[row])
        sid = store.create(session, body.patient_id)
        return session_payload(store.get(sid), vocabulary)

    @app.get("/api/sessions/{sid}")
    def get_session(sid: str):
        try:
            slot = store.get(sid)
        except KeyError:
            return error(404, f"unknown session {sid}")
        return session_payload(slot, vocabulary)

    def _mutate(sid, op):
        try:
            store.mutate(sid, op)
        except KeyError:
            return error(404, f"unknown session {sid}")
        except InferenceError as exc:
            return error(409, str(exc))
        return session_payload(store.get(sid), vocabulary)

    @app.post("/api/sessions/{sid}/rule_out")
    def session_rule_out(sid: str, body: RuleOutRequest):
        return _mutate(sid, lambda s: rule_out(s, set(body.diagnoses)))

    @app.post("/api/sessions/{sid}/confirm")
    def session_confirm(sid: str, body: ConfirmRequest):
        return _mutate(sid, lambda s: confirm(s, body.diagnosis))

    @app.post("/api/sessions/{sid}/reset")
    def session_reset(sid: str):
        return _mutate(sid, reset)

    if static_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
