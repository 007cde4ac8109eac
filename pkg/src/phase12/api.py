"""HTTP face of the conductor: JSON over a small set of trial endpoints.

The app is a thin adapter. Every number a client sees is computed by the
Trial state machine; handlers only translate between JSON and that core, map
ConductorError subclasses onto status codes, and gate writes behind an
optional static bearer token. Calibration runs as a background job with a
polling endpoint, since a bootstrap search takes minutes, not milliseconds.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import Body, Depends, FastAPI, Request
from fastapi.responses import JSONResponse

from .calibrate import CalibrationError, CalibrationSpec, calibrate_thresholds
from .conductor import (ConductorError, InvalidConfig, NotFound, OutOfOrder,
                        TrialConfig, TrialStore)
from .seqtest import Thresholds

__all__ = ["create_app"]

_STATUS = {
    "invalid_config": 422,
    "version_conflict": 409,
    "out_of_order": 409,
    "already_terminated": 409,
    "not_found": 404,
    "unauthorized": 401,
    "conductor_error": 400,
}


class _Unauthorized(ConductorError):
    code = "unauthorized"


def create_app(store: TrialStore | str, token: str | None = None) -> FastAPI:
    if isinstance(store, str):
        store = TrialStore(store)
    app = FastAPI(title="phase12 conductor", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.jobs = {}
    app.state.jobs_lock = threading.Lock()

    def auth(request: Request) -> None:
        if token is None:
            return
        got = request.headers.get("authorization", "")
        if got != f"Bearer {token}":
            raise _Unauthorized("missing or invalid bearer token", None)

    @app.exception_handler(ConductorError)
    def _conductor_error(request: Request, exc: ConductorError):
        return JSONResponse(status_code=_STATUS.get(exc.code, 400),
                            content=exc.to_dict())

    @app.get("/health")
    def health():
        return {"ok": True}

    @app.get("/trials", dependencies=[Depends(auth)])
    def list_trials():
        rows = []
        for tid in store.list_ids():
            s = store.get(tid).snapshot()
            rows.append({"trial_id": tid, "phase": s["phase"],
                         "n_enrolled": s["n_enrolled"], "max_n": s["max_n"],
                         "version": s["version"]})
        return {"trials": rows}

    @app.post("/trials", status_code=201, dependencies=[Depends(auth)])
    def create_trial(body: dict = Body(...)):
        raw = body.get("config")
        if raw is None:
            raise InvalidConfig("missing required field 'config'", "config")
        config = TrialConfig.from_dict(raw)
        t = store.create(config, trial_id=body.get("trial_id"),
                         actor=str(body.get("actor", "")))
        return t.snapshot()

    @app.get("/trials/{trial_id}", dependencies=[Depends(auth)])
    def get_trial(trial_id: str):
        return store.get(trial_id).snapshot()

    @app.get("/trials/{trial_id}/events", dependencies=[Depends(auth)])
    def get_events(trial_id: str):
        t = store.get(trial_id)
        return {"trial_id": trial_id, "events": [e.to_dict() for e in t.events]}

    @app.post("/trials/{trial_id}/outcomes", dependencies=[Depends(auth)])
    def post_outcome(trial_id: str, body: dict = Body(...)):
        for k in ("patient_idx", "tox", "eff", "version"):
            if not isinstance(body.get(k), int):
                raise InvalidConfig(f"field '{k}' must be an integer", k)
        actor = str(body.get("actor", ""))
        if body.get("amend"):
            return store.mutate(trial_id, lambda t: t.amend_outcome(
                body["patient_idx"], body["tox"], body["eff"], body["version"],
                actor=actor))
        return store.mutate(trial_id, lambda t: t.record_outcome(
            body["patient_idx"], body["tox"], body["eff"], body["version"],
            actor=actor))

    @app.post("/trials/{trial_id}/project", dependencies=[Depends(auth)])
    def post_project(trial_id: str, body: dict = Body(...)):
        rows = body.get("outcomes")
        if not isinstance(rows, list) or not rows:
            raise InvalidConfig("field 'outcomes' must be a nonempty array", "outcomes")
        outcomes = []
        for r in rows:
            if not isinstance(r, dict) or not isinstance(r.get("tox"), int) \
                    or not isinstance(r.get("eff"), int):
                raise InvalidConfig("each outcome needs integer 'tox' and 'eff'",
                                    "outcomes")
            outcomes.append((r["tox"], r["eff"]))
        return store.get(trial_id).project(outcomes)

    @app.post("/trials/{trial_id}/calibrate", status_code=202,
              dependencies=[Depends(auth)])
    def post_calibrate(trial_id: str, body: dict = Body(default={})):
        t = store.get(trial_id)
        if t.phase1_result is None:
            raise OutOfOrder("phase I is still enrolling; calibrate after closeout",
                             None)
        d = t.config.design
        try:
            spec = CalibrationSpec(
                alpha=float(body.get("alpha", 0.05)),
                beta=float(body.get("beta", 0.2)),
                p0=d.p0, schedule=d.schedule, q=d.q, x_min=d.x_min, x_max=d.x_max,
                epsilon=float(body.get("epsilon", 1 / 3)),
                n_boot=int(body.get("n_boot", 10_000)),
                seed=int(body.get("seed", 0)),
                mode=d.analysis, dependent=d.dependent, window=d.window,
                update_mtd=d.update_mtd, delta=d.delta,
                p1_override=(float(body["p1_override"])
                             if body.get("p1_override") is not None else None),
                early_efficacy=bool(body.get("early_efficacy", True)))
        except ValueError as e:
            raise InvalidConfig(str(e), None) from e
        apply = bool(body.get("apply", False))
        job_id = uuid.uuid4().hex[:12]
        with app.state.jobs_lock:
            app.state.jobs[job_id] = {"job_id": job_id, "trial_id": trial_id,
                                      "status": "running"}

        def work():
            job = app.state.jobs[job_id]
            try:
                res = calibrate_thresholds(spec, t.phase1_result)
            except (CalibrationError, ValueError) as e:
                with app.state.jobs_lock:
                    job.update(status="failed", error=str(e))
                return
            out = res.to_dict()
            applied = False
            note = None
            if apply:
                th = Thresholds(b=res.thresholds.b, b_tilde=res.thresholds.b_tilde,
                                c=res.thresholds.c, p0=d.p0, p1=res.p1,
                                alpha=spec.alpha, beta=spec.beta, epsilon=spec.epsilon)
                try:
                    store.mutate(trial_id, lambda tr: tr.set_thresholds(
                        th, res.p1, tr.version, actor="calibrator"))
                    applied = True
                except ConductorError as e:
                    note = e.message
            with app.state.jobs_lock:
                job.update(status="done", result=out, applied=applied,
                           apply_note=note)

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job_id, "status": "running"}

    @app.get("/trials/{trial_id}/calibrate/{job_id}", dependencies=[Depends(auth)])
    def get_calibrate(trial_id: str, job_id: str):
        with app.state.jobs_lock:
            job = app.state.jobs.get(job_id)
            if job is None or job.get("trial_id") != trial_id:
                raise NotFound(f"no calibration job '{job_id}'")
            return dict(job)

    return app
