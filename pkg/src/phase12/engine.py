"""Phase II trial engine: adaptive dosing plus group-sequential testing.

One state machine covers every consumer. The simulator feeds it generated
outcomes, the threshold calibrator runs it with stopping disabled to harvest
GLR paths, and the live conductor replays submitted outcomes through it, so
a decision reached in any of them is reproducible in the others bit for bit.

Each incoming subject is dosed at the current MTD estimate (re-estimated
after every outcome unless `update_mtd` is off, which freezes the end-of-
Phase-I value). At each scheduled analysis the efficacy GLR statistics are
computed at that estimate and the stopping rules applied: early efficacy
first, then early futility, with the final analysis forced to a verdict.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import inference as inf
from .models import iso_mtd
from .phase1 import DrawFn, Phase1Result
from .seqtest import (GlrStats, GroupSchedule, InterimDecision, Thresholds, Verdict,
                      estimate_mtd_grid_parametric, fit_mtd_continuous,
                      glr_statistics_isotonic, glr_statistics_parametric,
                      interim_decision)

__all__ = ["DesignConfig", "Phase2Engine", "TrialComplete"]


class TrialComplete(RuntimeError):
    """Raised when outcomes arrive after the trial has already stopped."""


@dataclass(frozen=True)
class DesignConfig:
    """Everything that fixes the Phase II decision sequence except thresholds.

    `analysis` picks the efficacy model ("parametric" logistic or "isotonic"
    order-restricted). Parametric trials dose continuously unless `grid` is
    given, in which case dosing and MTD estimation are restricted to those
    levels; isotonic trials always dose on the levels seen in Phase I.
    `window`, when set, restricts each GLR fit to doses within that distance
    of the current MTD estimate.
    """

    q: float
    p0: float
    p1: float
    x_min: float
    x_max: float
    schedule: GroupSchedule
    analysis: str = "parametric"
    update_mtd: bool = True
    grid: tuple[float, ...] | None = None
    dependent: bool = False
    window: float | None = None
    delta: float = inf.DEFAULT_DELTA

    def __post_init__(self):
        if self.analysis not in ("parametric", "isotonic"):
            raise ValueError("analysis must be 'parametric' or 'isotonic'")
        if not 0.0 < self.p0 < self.p1 < 1.0:
            raise ValueError("need 0 < p0 < p1 < 1")
        if not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if not self.x_min < self.x_max:
            raise ValueError("need x_min < x_max")
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(sorted(float(g) for g in self.grid)))
        if self.dependent and self.analysis != "isotonic":
            raise ValueError("dependent joint modelling applies to the isotonic analysis")
        if self.window is not None and self.window <= 0:
            raise ValueError("window must be positive")


@dataclass
class EngineState:
    """Mutable trial state; everything needed to resume or clone a trial."""

    data: inf.TrialData
    eta_hat: float
    level_index: int | None          # index into levels for grid dosing
    levels: tuple[float, ...] | None  # dose levels the trial may use
    bayes_fallback: float | None
    analyses_run: int = 0
    decision: InterimDecision | None = None
    stats_history: list[GlrStats] = field(default_factory=list)
    theta_warm: tuple[float, float] | None = None  # Newton seed for the next refit


class Phase2Engine:
    """Drives one trial through Phase II given its Phase I starting point.

    `thresholds=None` disables stopping: the trial enrolls to the maximum and
    every scheduled analysis still records its GLR statistics, which is how
    calibration harvests boundary-crossing paths before thresholds exist.
    """

    def __init__(self, config: DesignConfig, thresholds: Thresholds | None,
                 phase1: Phase1Result):
        if thresholds is not None and (thresholds.p0 != config.p0
                                       or thresholds.p1 != config.p1):
            raise ValueError("thresholds calibrated for different hypotheses")
        if len(phase1.data.doses) != config.schedule.m:
            raise ValueError("phase I size disagrees with the analysis schedule")
        self.config = config
        self.thresholds = thresholds
        data = inf.TrialData(list(phase1.data.doses), list(phase1.data.tox),
                             list(phase1.data.eff))
        levels = None
        level_index = None
        if config.analysis == "isotonic":
            levels = phase1.used_levels or tuple(sorted(set(data.doses)))
        elif config.grid is not None:
            levels = config.grid
        self.state = EngineState(data=data, eta_hat=float("nan"), level_index=level_index,
                                 levels=levels, bayes_fallback=phase1.eta_crm)
        self._refresh_estimate(force=True)

    # -- read-only views ---------------------------------------------------

    @property
    def n_enrolled(self) -> int:
        return len(self.state.data.doses)

    @property
    def decision(self) -> InterimDecision | None:
        return self.state.decision

    @property
    def stats_history(self) -> list[GlrStats]:
        return self.state.stats_history

    @property
    def eta_hat(self) -> float:
        return self.state.eta_hat

    @property
    def complete(self) -> bool:
        if self.state.decision is not None:
            return True
        return self.state.analyses_run >= self.config.schedule.n_analyses

    def next_dose(self) -> float:
        if self.complete:
            raise TrialComplete("trial has stopped; no further subjects")
        return self.state.eta_hat

    def clone(self) -> "Phase2Engine":
        return copy.deepcopy(self)

    # -- state transitions ---------------------------------------------------

    def record(self, tox: int, eff: int, dose: float | None = None) -> InterimDecision | None:
        """Add one subject's outcomes; runs the analysis its arrival triggers.

        `dose` defaults to the engine's recommendation; a caller tracking a
        live trial passes the dose actually administered. Returns the
        analysis decision when this subject completes a group, else None.
        """
        if self.complete:
            raise TrialComplete("trial has stopped; no further subjects")
        if dose is None:
            dose = self.next_dose()
        st = self.state
        st.data.add(float(dose), int(tox), int(eff))
        self._refresh_estimate()
        sched = self.config.schedule
        k_next = st.analyses_run + 1
        if k_next <= sched.n_analyses and self.n_enrolled == sched.tau(k_next):
            return self._run_analysis(k_next)
        return None

    def run(self, draw: DrawFn, rng: np.random.Generator) -> InterimDecision | None:
        """Enroll to completion with generated outcomes (simulation driver)."""
        while not self.complete:
            x = self.next_dose()
            y, z = draw(x, rng)
            self.record(y, z, dose=x)
        return self.state.decision

    # -- internals -----------------------------------------------------------

    def _refresh_estimate(self, force: bool = False) -> None:
        if not (force or self.config.update_mtd):
            return
        cfg = self.config
        st = self.state
        doses, tox = st.data.doses, st.data.tox
        if cfg.analysis == "isotonic":
            counts = inf.DoseCounts.from_records(st.levels, doses, tox, st.data.eff)
            phi_hat = inf.pava_isotonic_mle(counts.s_tox, counts.n)
            st.level_index = iso_mtd(phi_hat, cfg.q)
            st.eta_hat = float(st.levels[st.level_index])
        elif st.levels is not None:
            st.level_index = estimate_mtd_grid_parametric(doses, tox, q=cfg.q,
                                                          grid=st.levels, delta=cfg.delta)
            st.eta_hat = float(st.levels[st.level_index])
        else:
            fallback = st.bayes_fallback
            if fallback is None and not np.isnan(st.eta_hat):
                fallback = st.eta_hat
            st.eta_hat, rep = fit_mtd_continuous(doses, tox, q=cfg.q, x_min=cfg.x_min,
                                                 x_max=cfg.x_max, delta=cfg.delta,
                                                 fallback=fallback, init=st.theta_warm)
            if rep is not None:
                st.theta_warm = (rep.intercept, rep.slope)

    def _glr_stats(self) -> GlrStats:
        cfg = self.config
        st = self.state
        if cfg.analysis == "isotonic":
            counts = inf.DoseCounts.from_records(st.levels, st.data.doses, st.data.tox,
                                                 st.data.eff)
            return glr_statistics_isotonic(counts, st.level_index, p0=cfg.p0, p1=cfg.p1,
                                           dependent=cfg.dependent)
        return glr_statistics_parametric(st.data.doses, st.data.eff, eta_hat=st.eta_hat,
                                         p0=cfg.p0, p1=cfg.p1, delta=cfg.delta,
                                         window=cfg.window)

    def _run_analysis(self, k: int) -> InterimDecision | None:
        st = self.state
        stats = self._glr_stats()
        st.stats_history.append(stats)
        st.analyses_run = k
        if self.thresholds is None:
            return None
        d = interim_decision(k, self.config.schedule.n_analyses, stats, self.thresholds)
        if d.verdict is not Verdict.CONTINUE:
            st.decision = d
        return d
