"""Live trial conduct: one outcome at a time, with an audit trail.

A Trial wraps the same Phase I posterior machinery and Phase2Engine that the
simulator uses, so a conducted trial and a simulated one produce identical
statistics on identical data. What this module adds is bookkeeping for the
human loop:

- every accepted input appends an event to a JSON-lines log, and replaying
  the log reproduces the exact state (recommendations and analyses are
  deterministic functions of the inputs);
- mutations carry a version token for optimistic concurrency, and duplicate
  (patient_idx, version) submissions are answered idempotently instead of
  double-recording a patient;
- late corrections enter as Amendment events: the binding verdict history
  is never rewritten, but all analyses are re-run on the corrected data and
  reported as an advisory recomputation.

Dose recommendations are binding: an outcome is recorded at the dose the
trial recommended for that patient. The uniform-grid Phase I design draws
its recommendation from a per-patient seeded stream so that replay and
concurrent readers agree on it.
"""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import inference as inf
from .engine import DesignConfig, Phase2Engine
from .phase1 import (Phase1Config, Phase1Result, PriorGrid, ewoc_next_dose,
                     posterior_update, summarize_estimates)
from .seqtest import GroupSchedule, Thresholds, Verdict

__all__ = [
    "ConductorError", "InvalidConfig", "OutOfOrder", "AlreadyTerminated",
    "VersionConflict", "NotFound", "TrialConfig", "Trial", "TrialStore",
]


class ConductorError(RuntimeError):
    code = "conductor_error"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.message = message
        self.field = field

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "field": self.field}


class InvalidConfig(ConductorError):
    code = "invalid_config"


class OutOfOrder(ConductorError):
    code = "out_of_order"


class AlreadyTerminated(ConductorError):
    code = "already_terminated"


class VersionConflict(ConductorError):
    code = "version_conflict"


class NotFound(ConductorError):
    code = "not_found"


def _num(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def _unnum(v) -> float:
    if v == "inf":
        return math.inf
    if v == "-inf":
        return -math.inf
    return float(v)


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


# -- configuration ---------------------------------------------------------------


def _need(d: dict, key: str, kind, field_name: str):
    if key not in d:
        raise InvalidConfig(f"missing required field '{field_name}'", field_name)
    v = d[key]
    if kind is float and isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if kind is int and isinstance(v, int) and not isinstance(v, bool):
        return v
    if kind is str and isinstance(v, str):
        return v
    raise InvalidConfig(f"field '{field_name}' must be {kind.__name__}", field_name)


@dataclass(frozen=True)
class TrialConfig:
    """Everything a trial needs; built from the API payload with field checks."""

    phase1: Phase1Config
    design: DesignConfig
    thresholds: Thresholds
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "TrialConfig":
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be an object", None)
        q = _need(raw, "q", float, "q")
        x_min = _need(raw, "x_min", float, "x_min")
        x_max = _need(raw, "x_max", float, "x_max")
        p0 = _need(raw, "p0", float, "p0")
        p1 = _need(raw, "p1", float, "p1")
        analysis = raw.get("analysis", "parametric")
        if analysis not in ("parametric", "isotonic"):
            raise InvalidConfig("analysis must be 'parametric' or 'isotonic'", "analysis")
        grid = raw.get("grid")
        if grid is not None:
            if not isinstance(grid, (list, tuple)) or not grid:
                raise InvalidConfig("field 'grid' must be a nonempty array", "grid")
            grid = tuple(float(g) for g in grid)
        if raw.get("grid_dosing") and grid is None:
            raise InvalidConfig("grid_dosing requires 'grid'", "grid")

        ph = raw.get("phase1")
        if not isinstance(ph, dict):
            raise InvalidConfig("missing required field 'phase1'", "phase1")
        design_name = _need(ph, "design", str, "phase1.design")
        m = _need(ph, "m", int, "phase1.m")
        try:
            phase1 = Phase1Config(
                design=design_name, m=m, q=q, x_min=x_min, x_max=x_max, grid=grid,
                omega=float(ph.get("omega", 0.25)),
                n_rho=int(ph.get("n_rho", 101)), n_eta=int(ph.get("n_eta", 101)),
                delta=float(raw.get("delta", inf.DEFAULT_DELTA)))
        except ValueError as e:
            raise InvalidConfig(str(e), "phase1") from e

        gs = raw.get("group_sizes")
        if (not isinstance(gs, (list, tuple)) or not gs
                or not all(isinstance(g, int) and g > 0 for g in gs)):
            raise InvalidConfig("field 'group_sizes' must be a nonempty array of "
                                "positive integers", "group_sizes")
        schedule = GroupSchedule(m=m, group_sizes=tuple(gs))

        th = raw.get("thresholds")
        if not isinstance(th, dict):
            raise InvalidConfig("missing required field 'thresholds' (use b = "
                                "b_tilde = \"inf\" for a fixed-sample test)", "thresholds")
        if "c" not in th:
            raise InvalidConfig("missing required field 'thresholds.c'", "thresholds.c")
        try:
            thresholds = Thresholds(
                b=_unnum(th.get("b", "inf")), b_tilde=_unnum(th.get("b_tilde", "inf")),
                c=_unnum(th["c"]), p0=p0, p1=p1,
                alpha=th.get("alpha"), beta=th.get("beta"), epsilon=th.get("epsilon"))
        except (ValueError, TypeError) as e:
            raise InvalidConfig(str(e), "thresholds") from e

        window = raw.get("window")
        try:
            design = DesignConfig(
                q=q, p0=p0, p1=p1, x_min=x_min, x_max=x_max, schedule=schedule,
                analysis=analysis, update_mtd=bool(raw.get("update_mtd", True)),
                grid=grid if analysis == "parametric" and raw.get("grid_dosing") else None,
                dependent=bool(raw.get("dependent", False)),
                window=float(window) if window is not None else None,
                delta=float(raw.get("delta", inf.DEFAULT_DELTA)))
        except ValueError as e:
            raise InvalidConfig(str(e), None) from e
        return cls(phase1=phase1, design=design, thresholds=thresholds,
                   seed=int(raw.get("seed", 0)))

    def to_dict(self) -> dict:
        ph = self.phase1
        d = self.design
        th = self.thresholds
        return {
            "q": d.q, "x_min": d.x_min, "x_max": d.x_max, "p0": d.p0, "p1": d.p1,
            "analysis": d.analysis, "update_mtd": d.update_mtd,
            "dependent": d.dependent, "window": d.window, "delta": d.delta,
            "grid": list(ph.grid) if ph.grid else None,
            "grid_dosing": d.grid is not None,
            "group_sizes": list(d.schedule.group_sizes),
            "phase1": {"design": ph.design, "m": ph.m, "omega": ph.omega,
                       "n_rho": ph.n_rho, "n_eta": ph.n_eta},
            "thresholds": {"b": _num(th.b), "b_tilde": _num(th.b_tilde), "c": _num(th.c),
                           "alpha": th.alpha, "beta": th.beta, "epsilon": th.epsilon},
            "seed": self.seed,
        }


# -- events ------------------------------------------------------------------------


@dataclass
class Event:
    seq: int
    kind: str  # enroll | outcome | interim_analysis | decision | amendment
    at: str
    actor: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "at": self.at, "actor": self.actor,
                "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(seq=int(d["seq"]), kind=str(d["kind"]), at=str(d["at"]),
                   actor=str(d.get("actor", "")), payload=dict(d["payload"]))


# -- trial state machine -------------------------------------------------------------


class Trial:
    """One trial's full state: Phase I escalation, Phase II engine, audit log."""

    def __init__(self, trial_id: str, config: TrialConfig):
        self.trial_id = trial_id
        self.config = config
        self.version = 1
        self.events: list[Event] = []
        self.data = inf.TrialData()
        self.posterior: PriorGrid | None = None
        if config.phase1.design == "ewoc":
            self.posterior = PriorGrid.uniform(config.phase1.q, config.phase1.x_min,
                                               config.phase1.x_max, config.phase1.n_rho,
                                               config.phase1.n_eta)
        self.phase1_result: Phase1Result | None = None
        self.engine: Phase2Engine | None = None
        self.verdicts: list[dict] = []
        self.eta_history: list[dict] = []  # one row per analysis: k, n, eta_hat
        self.advisory: dict | None = None
        # (kind, patient_idx, version) -> (tox, eff) for idempotent resubmission
        self._applied: dict[tuple[str, int, int], tuple[int, int]] = {}
        self._lock = threading.RLock()

    # -- creation ------------------------------------------------------------

    @classmethod
    def create(cls, config: TrialConfig, trial_id: str | None = None,
               actor: str = "") -> "Trial":
        t = cls(trial_id or uuid.uuid4().hex[:12], config)
        t._emit("enroll", actor, t._enroll_payload())
        return t

    # -- views ---------------------------------------------------------------

    @property
    def phase(self) -> str:
        if self.engine is not None and self.engine.state.decision is not None:
            return "terminated"
        if self.phase1_result is not None:
            return "phase2"
        return "phase1"

    @property
    def n_enrolled(self) -> int:
        return len(self.data.doses)

    def next_patient_idx(self) -> int:
        return self.n_enrolled

    def pending_recommendation(self) -> dict | None:
        if self.phase == "terminated":
            return None
        if self.engine is not None and self.engine.complete:
            return None
        return {"patient_idx": self.next_patient_idx(), "dose": self._recommend()}

    def _recommend(self) -> float:
        if self.phase1_result is None:
            cfg = self.config.phase1
            if cfg.design == "ewoc":
                return ewoc_next_dose(self.posterior, cfg.omega)
            rng = np.random.default_rng([self.config.seed, self.next_patient_idx()])
            return float(cfg.grid[int(rng.integers(len(cfg.grid)))])
        return self.engine.next_dose()

    # -- mutations -------------------------------------------------------------

    def record_outcome(self, patient_idx: int, tox: int, eff: int, version: int,
                       actor: str = "") -> dict:
        """Record one patient's outcomes at the recommended dose.

        Returns the post-mutation snapshot. A resubmission of an already
        accepted (patient_idx, version) pair is acknowledged with the current
        snapshot and touches nothing; the same pair with different outcome
        values is rejected outright.
        """
        with self._lock:
            self._check_duplicate("outcome", patient_idx, tox, eff, version)
            if ("outcome", int(patient_idx), int(version)) in self._applied:
                return self.snapshot()
            if self.phase == "terminated":
                raise AlreadyTerminated("trial has a terminal verdict")
            if version != self.version:
                raise VersionConflict(
                    f"version {version} does not match current {self.version}")
            if patient_idx != self.next_patient_idx():
                raise OutOfOrder(
                    f"expected patient {self.next_patient_idx()}, got {patient_idx}",
                    "patient_idx")
            if tox not in (0, 1):
                raise InvalidConfig("outcomes must be 0 or 1", "tox")
            if eff not in (0, 1):
                raise InvalidConfig("outcomes must be 0 or 1", "eff")
            at = _utcnow()
            dose = self._recommend()
            self._apply_outcome(patient_idx, dose, tox, eff, version, actor, at)
            return self.snapshot()

    def _check_duplicate(self, kind: str, patient_idx: int, tox: int, eff: int,
                         version: int) -> None:
        seen = self._applied.get((kind, int(patient_idx), int(version)))
        if seen is not None and seen != (int(tox), int(eff)):
            raise VersionConflict(
                f"{kind} for patient {patient_idx} at version {version} was already "
                "recorded with different values")

    def _apply_outcome(self, patient_idx: int, dose: float, tox: int, eff: int,
                       version: int, actor: str, at: str) -> None:
        """State transition shared by live recording and log replay."""
        self._emit("outcome", actor, {"patient_idx": patient_idx, "dose": dose,
                                      "tox": tox, "eff": eff,
                                      "version_submitted": version}, at=at)
        self._applied[("outcome", int(patient_idx), int(version))] = (int(tox), int(eff))
        if self.phase1_result is None:
            self.data.add(dose, int(tox), int(eff))
            if self.posterior is not None:
                self.posterior = posterior_update(self.posterior, dose, tox)
            if self.n_enrolled == self.config.phase1.m:
                self._phase1_closeout(actor, at)
        else:
            self.data.add(dose, int(tox), int(eff))
            decision = self.engine.record(tox, eff, dose=dose)
            if decision is not None:
                self._on_analysis(decision, actor, at)
        self.version += 1
        if self.phase != "terminated" and not (self.engine is not None
                                               and self.engine.complete):
            self._emit("enroll", actor, self._enroll_payload(), at=at)

    def _phase1_closeout(self, actor: str, at: str) -> None:
        self.phase1_result = summarize_estimates(self.config.phase1, self.data,
                                                 self.posterior)
        self.engine = Phase2Engine(self.config.design, self.config.thresholds,
                                   self.phase1_result)
        r = self.phase1_result
        self._emit("interim_analysis", actor, {
            "k": 0, "type": "phase1_closeout",
            "eta_mle": r.eta_mle, "eta_crm": r.eta_crm, "eta_ewoc": r.eta_ewoc,
            "eta_iso_index": r.eta_iso_index,
            "used_levels": list(r.used_levels) if r.used_levels else None,
            "eta_hat": self.engine.eta_hat}, at=at)

    def _on_analysis(self, decision, actor: str, at: str) -> None:
        k = decision.k
        stats = self.engine.stats_history[-1]
        row = {"k": k, "n": self.n_enrolled, "eta_hat": self.engine.eta_hat,
               "l0": stats.l0, "l1": stats.l1, "p_hat": stats.p_hat}
        self.eta_history.append(row)
        self._emit("interim_analysis", actor, dict(row), at=at)
        if decision.verdict is not Verdict.CONTINUE:
            v = {"k": k, "verdict": decision.verdict.value, "rule": decision.rule,
                 "at": at, "advisory": False}
            self.verdicts.append(v)
            self._emit("decision", actor, {"k": k, "verdict": decision.verdict.value,
                                           "rule": decision.rule}, at=at)

    def amend_outcome(self, patient_idx: int, tox: int, eff: int, version: int,
                      actor: str = "") -> dict:
        """Correct an already recorded outcome.

        The original events and any binding verdict stay untouched; the
        amendment is logged and every analysis is re-run on the corrected
        data (at the doses actually given), reported under 'advisory'.
        """
        with self._lock:
            self._check_duplicate("amendment", patient_idx, tox, eff, version)
            if ("amendment", int(patient_idx), int(version)) in self._applied:
                return self.snapshot()
            if version != self.version:
                raise VersionConflict(
                    f"version {version} does not match current {self.version}")
            if not 0 <= patient_idx < self.n_enrolled:
                raise OutOfOrder(f"patient {patient_idx} has no recorded outcome yet",
                                 "patient_idx")
            if tox not in (0, 1):
                raise InvalidConfig("outcomes must be 0 or 1", "tox")
            if eff not in (0, 1):
                raise InvalidConfig("outcomes must be 0 or 1", "eff")
            at = _utcnow()
            self._apply_amendment(patient_idx, tox, eff, version, actor, at)
            return self.snapshot()

    def _apply_amendment(self, patient_idx: int, tox: int, eff: int, version: int,
                         actor: str, at: str) -> None:
        self.data.tox[patient_idx] = int(tox)
        self.data.eff[patient_idx] = int(eff)
        self.advisory = self._recompute_advisory(at)
        self._emit("amendment", actor, {"patient_idx": patient_idx, "tox": tox,
                                        "eff": eff, "version_submitted": version,
                                        "advisory": self.advisory}, at=at)
        self._applied[("amendment", int(patient_idx), int(version))] = (int(tox),
                                                                        int(eff))
        self.version += 1

    def _recompute_advisory(self, at: str) -> dict:
        """Re-run Phase I closeout and every interim on the corrected data."""
        cfg = self.config
        m = cfg.phase1.m
        doses, tox, eff = self.data.doses, self.data.tox, self.data.eff
        posterior = None
        if cfg.phase1.design == "ewoc":
            posterior = PriorGrid.uniform(cfg.phase1.q, cfg.phase1.x_min,
                                          cfg.phase1.x_max, cfg.phase1.n_rho,
                                          cfg.phase1.n_eta)
            for x, y in zip(doses[:m], tox[:m]):
                posterior = posterior_update(posterior, x, y)
        out: dict = {"computed_at": at, "analyses": [], "decision": None}
        if len(doses) < m:
            return out
        p1_data = inf.TrialData(list(doses[:m]), list(tox[:m]), list(eff[:m]))
        p1_res = summarize_estimates(cfg.phase1, p1_data, posterior)
        out["eta_mle"] = p1_res.eta_mle
        eng = Phase2Engine(cfg.design, cfg.thresholds, p1_res)
        for i in range(m, len(doses)):
            if eng.complete:
                break
            decision = eng.record(tox[i], eff[i], dose=doses[i])
            if decision is None:
                continue
            stats = eng.stats_history[-1]
            out["analyses"].append({"k": decision.k, "n": i + 1,
                                    "eta_hat": eng.eta_hat, "l0": stats.l0,
                                    "l1": stats.l1, "p_hat": stats.p_hat,
                                    "verdict": decision.verdict.value,
                                    "rule": decision.rule})
            if decision.verdict is not Verdict.CONTINUE:
                out["decision"] = {"k": decision.k, "verdict": decision.verdict.value,
                                   "rule": decision.rule, "advisory": True}
        return out

    def set_thresholds(self, thresholds: Thresholds, p1: float, version: int,
                       actor: str = "") -> dict:
        """Adopt calibrated thresholds at the Phase I / Phase II boundary.

        Only allowed before any Phase II enrollment, so no analysis is ever
        re-interpreted under different boundaries.
        """
        with self._lock:
            if version != self.version:
                raise VersionConflict(
                    f"version {version} does not match current {self.version}")
            if self.phase1_result is None:
                raise OutOfOrder("phase I is still enrolling", None)
            if self.n_enrolled > self.config.phase1.m:
                raise OutOfOrder("phase II has begun; thresholds are frozen", None)
            at = _utcnow()
            self._apply_thresholds(thresholds, p1, actor, at)
            return self.snapshot()

    def _apply_thresholds(self, thresholds: Thresholds, p1: float, actor: str,
                          at: str) -> None:
        cfg = self.config
        try:
            design = DesignConfig(q=cfg.design.q, p0=cfg.design.p0, p1=p1,
                                  x_min=cfg.design.x_min, x_max=cfg.design.x_max,
                                  schedule=cfg.design.schedule,
                                  analysis=cfg.design.analysis,
                                  update_mtd=cfg.design.update_mtd, grid=cfg.design.grid,
                                  dependent=cfg.design.dependent,
                                  window=cfg.design.window, delta=cfg.design.delta)
        except ValueError as e:
            raise InvalidConfig(str(e), "p1") from e
        self.config = TrialConfig(phase1=cfg.phase1, design=design,
                                  thresholds=thresholds, seed=cfg.seed)
        self.engine = Phase2Engine(design, thresholds, self.phase1_result)
        self._emit("amendment", actor, {
            "type": "thresholds", "p1": p1,
            "b": _num(thresholds.b), "b_tilde": _num(thresholds.b_tilde),
            "c": _num(thresholds.c)}, at=at)
        self.version += 1

    # -- what-if projection -----------------------------------------------------

    def project(self, outcomes: list[tuple[int, int]]) -> dict:
        """Statistics the trial would show after hypothetical next outcomes.

        Pure read: runs on a clone of the engine and never mutates, logs, or
        decides anything.
        """
        if self.phase1_result is None:
            raise OutOfOrder("phase I is still enrolling; nothing to project", None)
        if self.phase == "terminated":
            raise AlreadyTerminated("trial has a terminal verdict")
        eng = self.engine.clone()
        rows = []
        decision_out = None
        for tox, eff in outcomes:
            if eng.complete:
                break
            if tox not in (0, 1) or eff not in (0, 1):
                raise InvalidConfig("outcomes must be 0 or 1", "outcomes")
            x = eng.next_dose()
            decision = eng.record(tox, eff, dose=x)
            if decision is None:
                continue
            stats = eng.stats_history[-1]
            rows.append({"k": decision.k, "n": eng.n_enrolled, "eta_hat": eng.eta_hat,
                         "l0": stats.l0, "l1": stats.l1, "p_hat": stats.p_hat,
                         "verdict": decision.verdict.value, "rule": decision.rule})
            if decision.verdict is not Verdict.CONTINUE:
                decision_out = rows[-1]
        return {"projected": True, "n_hypothetical": len(outcomes),
                "analyses": rows, "decision": decision_out,
                "next_dose": None if eng.complete else eng.next_dose()}

    # -- serialization ------------------------------------------------------------

    def _enroll_payload(self) -> dict:
        return {"patient_idx": self.next_patient_idx(), "dose": self._recommend()}

    def _emit(self, kind: str, actor: str, payload: dict, at: str | None = None) -> None:
        self.events.append(Event(seq=len(self.events), kind=kind,
                                 at=at or _utcnow(), actor=actor, payload=payload))

    def _response_estimate(self, levels_view) -> dict | None:
        """Current efficacy-curve estimate for the report, never for decisions."""
        if self.engine is None:
            return None
        if self.config.design.analysis == "parametric":
            x, n, s = inf.aggregate_binary(self.data.doses, self.data.eff)
            try:
                rep = inf.logistic_mle(x, n, s, delta=self.config.design.delta)
            except inf.NonexistentMleError:
                return {"kind": "parametric", "psi": None}
            return {"kind": "parametric", "psi": [rep.intercept, rep.slope]}
        if not levels_view:
            return None
        n = np.array([r["n"] for r in levels_view], dtype=float)
        pi = inf.pava_isotonic_mle(np.array([r["eff"] for r in levels_view]), n)
        phi = inf.pava_isotonic_mle(np.array([r["tox"] for r in levels_view]), n)
        return {"kind": "isotonic", "pi": [float(v) for v in pi],
                "phi": [float(v) for v in phi]}

    def snapshot(self) -> dict:
        """The read model every viewer polls; all numbers originate here."""
        with self._lock:
            sched = self.config.design.schedule
            est = None
            levels = None
            if self.engine is not None:
                st = self.engine.state
                est = {"eta_hat": st.eta_hat, "level_index": st.level_index,
                       "eta_mle_phase1": self.phase1_result.eta_mle}
                if st.levels is not None:
                    counts = inf.DoseCounts.from_records(st.levels, self.data.doses,
                                                         self.data.tox, self.data.eff)
                    levels = [{"dose": float(l), "n": int(n), "tox": int(s),
                               "eff": int(e)}
                              for l, n, s, e in zip(st.levels, counts.n, counts.s_tox,
                                                    counts.s_eff)]
            th = self.config.thresholds
            return {
                "trial_id": self.trial_id,
                "version": self.version,
                "phase": self.phase,
                "n_enrolled": self.n_enrolled,
                "m": self.config.phase1.m,
                "max_n": sched.max_n,
                "analysis_at": [sched.tau(k) for k in range(1, sched.n_analyses + 1)],
                "analyses_run": (0 if self.engine is None
                                 else self.engine.state.analyses_run),
                "pending": self.pending_recommendation(),
                "estimates": est,
                "response": self._response_estimate(levels),
                "levels": levels,
                "analyses": list(self.eta_history),
                "thresholds": {"b": _num(th.b), "b_tilde": _num(th.b_tilde),
                               "c": _num(th.c), "p0": th.p0, "p1": th.p1},
                "verdicts": list(self.verdicts),
                "advisory": self.advisory,
                "config": self.config.to_dict(),
                "events_count": len(self.events),
            }

    # -- replay ---------------------------------------------------------------------

    @classmethod
    def replay(cls, trial_id: str, config: TrialConfig, events: list[Event]) -> "Trial":
        """Rebuild the exact state by re-applying every input event.

        Derived events (enroll, interim_analysis, decision) are regenerated
        by the same transitions that produced them live; the stored log
        remains the audit authority for timestamps and actors.
        """
        t = cls(trial_id, config)
        for ev in events:
            if ev.kind == "outcome":
                p = ev.payload
                t._apply_outcome(int(p["patient_idx"]), float(p["dose"]),
                                 int(p["tox"]), int(p["eff"]),
                                 int(p["version_submitted"]), ev.actor, ev.at)
            elif ev.kind == "amendment" and ev.payload.get("type") == "thresholds":
                p = ev.payload
                th = Thresholds(b=_unnum(p["b"]), b_tilde=_unnum(p["b_tilde"]),
                                c=_unnum(p["c"]), p0=t.config.design.p0,
                                p1=float(p["p1"]))
                t._apply_thresholds(th, float(p["p1"]), ev.actor, ev.at)
            elif ev.kind == "amendment":
                p = ev.payload
                t._apply_amendment(int(p["patient_idx"]), int(p["tox"]), int(p["eff"]),
                                   int(p["version_submitted"]), ev.actor, ev.at)
        # replay regenerated its own copies of the derived events; keep the
        # stored log as the single audit record
        t.events = list(events)
        return t


# -- persistence ---------------------------------------------------------------------


class TrialStore:
    """Directory of trials: {id}.config.json, {id}.events.jsonl, {id}.snapshot.json.

    The event log is the source of truth; the snapshot file is a convenience
    copy of the latest read model for humans and external tools.
    """

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self._trials: dict[str, Trial] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _valid_id(trial_id: str) -> bool:
        return bool(trial_id) and trial_id.replace("-", "").replace("_", "").isalnum()

    def _path(self, trial_id: str, suffix: str) -> str:
        if not self._valid_id(trial_id):
            raise NotFound(f"no trial '{trial_id}'")
        return os.path.join(self.root, f"{trial_id}.{suffix}")

    def create(self, config: TrialConfig, trial_id: str | None = None,
               actor: str = "") -> Trial:
        if trial_id is not None and not self._valid_id(trial_id):
            raise InvalidConfig("trial_id must use only letters, digits, '-', '_'",
                                "trial_id")
        t = Trial.create(config, trial_id, actor)
        with self._lock, t._lock:
            if t.trial_id in self._trials or os.path.exists(self._path(t.trial_id,
                                                                       "config.json")):
                raise InvalidConfig(f"trial '{t.trial_id}' already exists", "trial_id")
            with open(self._path(t.trial_id, "config.json"), "w") as f:
                json.dump({"trial_id": t.trial_id, "config": config.to_dict()}, f)
            self._trials[t.trial_id] = t
            self._flush(t, new_events=t.events)
        return t

    def get(self, trial_id: str) -> Trial:
        with self._lock:
            if trial_id in self._trials:
                return self._trials[trial_id]
        t = self._load(trial_id)
        with self._lock:
            self._trials.setdefault(trial_id, t)
            return self._trials[trial_id]

    def list_ids(self) -> list[str]:
        names = [f[: -len(".config.json")] for f in os.listdir(self.root)
                 if f.endswith(".config.json")]
        return sorted(names)

    def _load(self, trial_id: str) -> Trial:
        cpath = self._path(trial_id, "config.json")
        if not os.path.exists(cpath):
            raise NotFound(f"no trial '{trial_id}'")
        with open(cpath) as f:
            config = TrialConfig.from_dict(json.load(f)["config"])
        events = []
        epath = self._path(trial_id, "events.jsonl")
        if os.path.exists(epath):
            with open(epath) as f:
                events = [Event.from_dict(json.loads(line)) for line in f if line.strip()]
        return Trial.replay(trial_id, config, events)

    def _flush(self, trial: Trial, new_events: list[Event]) -> None:
        epath = self._path(trial.trial_id, "events.jsonl")
        with open(epath, "a") as f:
            for ev in new_events:
                f.write(json.dumps(ev.to_dict()) + "\n")
        with open(self._path(trial.trial_id, "snapshot.json"), "w") as f:
            json.dump(trial.snapshot(), f)

    def mutate(self, trial_id: str, fn) -> dict:
        """Run a mutation and persist exactly the events it appended.

        Holds the trial's (reentrant) lock across mutation plus flush so two
        writers can neither interleave state transitions nor double-write
        event lines.
        """
        t = self.get(trial_id)
        with t._lock:
            n_before = len(t.events)
            reply = fn(t)
            if len(t.events) > n_before:
                self._flush(t, t.events[n_before:])
            return reply
