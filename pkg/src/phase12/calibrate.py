"""Bootstrap calibration of the group-sequential thresholds.

Everything here conditions on the Phase I data: the toxicity curve is fixed
at its end-of-Phase-I estimate, and each hypothesis's efficacy parameter is
the Phase I MLE constrained to put rate p_j at the estimated MTD. Bootstrap
replications then extend the real Phase I data with simulated Phase II
paths under those plug-ins.

The pieces, in the order calibrate_thresholds runs them:

1. Path harvest: simulate each replication's dose/toxicity path once
   (responses never influence dosing), keeping the dose sequence, the MTD
   estimate at every scheduled analysis, and the response uniforms. Any
   candidate efficacy curve is then scored on the same paths by
   thresholding the stored uniforms.
2. C_alpha: critical value of the fixed-sample test (final analysis only)
   with type I error alpha under the null plug-in.
3. Implied alternative p1: smallest rate at which that fixed-sample test
   has power 1 - beta, found by bisection with common random numbers.
4. b_tilde, b, c: empirical-quantile solutions of the three error-spend
   equations (futility eps*beta under p1; early efficacy eps*alpha and
   final (1-eps)*alpha under p0, accounting for earlier stopping). Ties
   resolve toward less spending.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import inference as inf
from .engine import DesignConfig, Phase2Engine
from .models import EfficacyParams, EwocParams, ToxicityParams, dale_cells, eff_prob, ewoc_to_theta, tox_prob
from .phase1 import Phase1Result, posterior_means
from .seqtest import (GroupSchedule, Thresholds, Verdict, glr_statistics_isotonic,
                      glr_statistics_parametric)

__all__ = [
    "CalibrationSpec",
    "CalibrationResult",
    "DegenerateSpend",
    "Unattainable",
    "CalibrationError",
    "implied_alternative",
    "calibrate_thresholds",
    "bootstrap_reject_prob",
]


class CalibrationError(RuntimeError):
    pass


class DegenerateSpend(CalibrationError):
    """A spend target corresponds to fewer than 10 bootstrap paths."""


class Unattainable(CalibrationError):
    """No alternative in (p0, 1) reaches the requested power."""

    def __init__(self, msg: str, max_power: float):
        super().__init__(msg)
        self.max_power = max_power


@dataclass(frozen=True)
class CalibrationSpec:
    alpha: float
    beta: float
    p0: float
    schedule: GroupSchedule
    q: float
    x_min: float
    x_max: float
    epsilon: float = 1.0 / 3.0
    n_boot: int = 10_000
    seed: int = 0
    mode: str = "parametric"
    dependent: bool = False
    window: float | None = None
    update_mtd: bool = True
    delta: float = inf.DEFAULT_DELTA
    p1_override: float | None = None
    early_efficacy: bool = True  # False pins b at inf and spends all alpha at the end

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0 and 0.0 < self.beta < 1.0):
            raise ValueError("alpha and beta must lie in (0, 1)")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 1/2)")
        if self.n_boot < 100:
            raise ValueError("need at least 100 bootstrap replications")
        if self.mode not in ("parametric", "isotonic"):
            raise ValueError("mode must be 'parametric' or 'isotonic'")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if self.p1_override is not None and not self.p0 < self.p1_override < 1.0:
            raise ValueError("p1 must lie in (p0, 1)")


@dataclass
class CalibrationResult:
    thresholds: Thresholds
    p1: float
    c_alpha_fss: float
    plugin: dict
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        th = self.thresholds

        def num(x):
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x

        return {"thresholds": {"b": num(th.b), "b_tilde": num(th.b_tilde), "c": num(th.c),
                               "p0": th.p0, "p1": th.p1, "alpha": th.alpha,
                               "beta": th.beta, "epsilon": th.epsilon},
                "p1": self.p1, "c_alpha_fss": self.c_alpha_fss,
                "plugin": self.plugin, "diagnostics": self.diagnostics}


# -- plug-in parameters --------------------------------------------------------


def _theta_plugin(phase1: Phase1Result, q: float, x_min: float) -> ToxicityParams:
    if phase1.theta_rep is not None:
        return ToxicityParams(phase1.theta_rep.intercept, phase1.theta_rep.slope)
    if phase1.posterior is not None:
        rho_m, eta_m = posterior_means(phase1.posterior)
        return ewoc_to_theta(EwocParams(rho0=rho_m, eta=eta_m), q, x_min)
    raise CalibrationError("no toxicity plug-in: MLE absent and no posterior")


def _psi_constrained(phase1: Phase1Result, eta_tilde: float, p_ref: float,
                     delta: float) -> EfficacyParams:
    xs, ns, ss = inf.aggregate_binary(phase1.data.doses, phase1.data.eff)
    rep = inf.constrained_logistic_mle(xs, ns, ss, dose_ref=eta_tilde, p_ref=p_ref,
                                       delta=delta)
    return EfficacyParams(rep.intercept, rep.slope)


def _iso_plugin(phase1: Phase1Result, spec: CalibrationSpec):
    """(levels, i_star, phi_hat, pi_constrained(p), rho_constrained(p))."""
    levels = phase1.used_levels
    if not levels:
        raise CalibrationError("isotonic calibration needs grid Phase I data")
    counts = inf.DoseCounts.from_records(levels, phase1.data.doses, phase1.data.tox,
                                         phase1.data.eff)
    phi_hat = inf.pava_isotonic_mle(counts.s_tox, counts.n)
    i_star = phase1.eta_iso_index

    if spec.dependent:
        def pi_rho_at(p_ref: float, side: str):
            fit = inf.dependent_iso_mle(counts, constraint=(i_star, p_ref, side))
            return np.asarray(fit.pi), np.asarray(fit.rho)
    else:
        pi_free = inf.pava_isotonic_mle(counts.s_eff, counts.n)

        def pi_rho_at(p_ref: float, side: str):
            return inf.constrained_isotonic_mle(pi_free, i_star, p_ref, side), None

    return levels, i_star, phi_hat, pi_rho_at


# -- path harvest ---------------------------------------------------------------


@dataclass
class _Harvest:
    """One replication's dose path plus everything needed to rescore it."""

    doses: list[float]          # full record, Phase I prefix included
    tox: list[int]
    u_z: np.ndarray             # response uniforms for the Phase II suffix
    eta_at_tau: list[float]     # MTD estimate at each scheduled analysis
    level_at_tau: list[int]     # level index at each analysis (grid modes)


def _recording_draw(tox_prob_at, sink: list):
    def draw(x: float, rng: np.random.Generator) -> tuple[int, int]:
        u_y = rng.random()
        u_z = rng.random()
        sink.append(u_z)
        return int(u_y < tox_prob_at(x)), 0
    return draw


def _design_for(spec: CalibrationSpec, schedule: GroupSchedule, p1: float) -> DesignConfig:
    return DesignConfig(q=spec.q, p0=spec.p0, p1=p1, x_min=spec.x_min, x_max=spec.x_max,
                        schedule=schedule, analysis=spec.mode, update_mtd=spec.update_mtd,
                        dependent=spec.dependent, window=spec.window, delta=spec.delta)


def _harvest_one(spec: CalibrationSpec, phase1: Phase1Result, tox_prob_at,
                 rep: int) -> _Harvest:
    """Run one dosing-only replication, sampling the MTD estimate at each tau_k.

    The engine is given a schedule whose lone analysis sits past the real
    maximum sample size, so dosing and estimate refreshes happen exactly as
    in a live trial but no statistic is ever computed on the placeholder
    responses.
    """
    rng = np.random.default_rng([spec.seed, rep])
    sched = spec.schedule
    # dummy p1 keeps DesignConfig valid; no analysis ever runs during harvest
    p1_dummy = min(0.99, spec.p0 + 0.5 * (1.0 - spec.p0))
    cfg = _design_for(spec, GroupSchedule(m=sched.m, group_sizes=(sched.max_n - sched.m + 1,)),
                      p1_dummy)
    u_sink: list[float] = []
    eng = Phase2Engine(cfg, None, phase1)
    draw = _recording_draw(tox_prob_at, u_sink)
    taus = {sched.tau(k) for k in range(1, sched.n_analyses + 1)}
    eta_at_tau: list[float] = []
    level_at_tau: list[int] = []
    for _ in range(sched.max_n - sched.m):
        x = eng.next_dose()
        y, z = draw(x, rng)
        eng.record(y, z, dose=x)
        if eng.n_enrolled in taus:
            eta_at_tau.append(eng.state.eta_hat)
            level_at_tau.append(eng.state.level_index if eng.state.level_index is not None
                                else -1)
    st = eng.state
    return _Harvest(doses=list(st.data.doses), tox=list(st.data.tox),
                    u_z=np.asarray(u_sink), eta_at_tau=eta_at_tau,
                    level_at_tau=level_at_tau)


def _harvest_chunk(args):
    spec, phase1, plugin_kind, plugin_payload, lo, hi = args
    tox_prob_at = _tox_fn(plugin_kind, plugin_payload)
    return [_harvest_one(spec, phase1, tox_prob_at, rep) for rep in range(lo, hi)]


def _tox_fn(kind: str, payload):
    if kind == "parametric":
        theta = ToxicityParams(*payload)
        return lambda x: float(tox_prob(x, theta))
    levels, phi_hat = payload
    arr = np.asarray(levels)
    phi = np.asarray(phi_hat)

    def at(x: float) -> float:
        j = int(np.argmin(np.abs(arr - x)))
        return float(phi[j])
    return at


def _harvest_paths(spec: CalibrationSpec, phase1: Phase1Result, plugin_kind: str,
                   plugin_payload, workers: int | None) -> list[_Harvest]:
    if workers is None or workers <= 1:
        tox_prob_at = _tox_fn(plugin_kind, plugin_payload)
        return [_harvest_one(spec, phase1, tox_prob_at, rep) for rep in range(spec.n_boot)]
    bounds = np.linspace(0, spec.n_boot, workers + 1).astype(int)
    jobs = [(spec, phase1, plugin_kind, plugin_payload, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(_harvest_chunk, jobs))
    return [h for chunk in chunks for h in chunk]


# -- rescoring harvested paths under a candidate efficacy model -----------------


def _responses_parametric(h: _Harvest, m: int, phase1_eff: list[int],
                          psi: EfficacyParams) -> np.ndarray:
    p = eff_prob(np.asarray(h.doses[m:]), psi)
    z2 = (h.u_z < p).astype(float)
    return np.concatenate([np.asarray(phase1_eff, dtype=float), z2])


def _responses_grid(h: _Harvest, m: int, phase1_eff: list[int], levels,
                    pi: np.ndarray, phi: np.ndarray,
                    rho: np.ndarray | None) -> np.ndarray:
    arr = np.asarray(levels)
    idx = np.argmin(np.abs(np.asarray(h.doses[m:])[:, None] - arr[None, :]), axis=1)
    if rho is None:
        p_z = pi[idx]
    else:
        # conditional response probability given the simulated toxicity outcome
        p_z = np.empty(idx.size)
        tox2 = np.asarray(h.tox[m:])
        for j, (i, y) in enumerate(zip(idx, tox2)):
            cells = dale_cells(float(pi[i]), float(phi[i]), float(rho[i]))
            if y:
                p_z[j] = cells.p11 / phi[i] if phi[i] > 0 else 0.0
            else:
                p_z[j] = cells.p01 / (1.0 - phi[i]) if phi[i] < 1 else 0.0
    z2 = (h.u_z < p_z).astype(float)
    return np.concatenate([np.asarray(phase1_eff, dtype=float), z2])


def _final_stats_parametric(h: _Harvest, z: np.ndarray, spec: CalibrationSpec,
                            tau_K: int) -> tuple[float, float]:
    """(l0_K, p_hat_K) of the final analysis only."""
    doses = np.asarray(h.doses[:tau_K])
    resp = z[:tau_K]
    eta = h.eta_at_tau[-1]
    if spec.window is not None:
        keep = np.abs(doses - eta) <= spec.window
        doses, resp = doses[keep], resp[keep]
    xs, ns, ss = inf.aggregate_binary(doses, resp)
    sup, p_hat = inf.logistic_sup(xs, ns, ss, dose_ref=eta, delta=spec.delta)
    con0 = inf.constrained_logistic_mle(xs, ns, ss, dose_ref=eta, p_ref=spec.p0,
                                        delta=spec.delta)
    return max(0.0, sup - con0.loglik), float(p_hat)


def _all_stats(h: _Harvest, z: np.ndarray, spec: CalibrationSpec, p1: float,
               levels=None):
    """GLR statistics (l0, l1, p_hat) at every scheduled analysis."""
    sched = spec.schedule
    out = []
    for k in range(1, sched.n_analyses + 1):
        t = sched.tau(k)
        if spec.mode == "parametric":
            s = glr_statistics_parametric(h.doses[:t], z[:t], eta_hat=h.eta_at_tau[k - 1],
                                          p0=spec.p0, p1=p1, delta=spec.delta,
                                          window=spec.window)
        else:
            counts = inf.DoseCounts.from_records(levels, h.doses[:t], h.tox[:t],
                                                 [int(v) for v in z[:t]])
            s = glr_statistics_isotonic(counts, h.level_at_tau[k - 1], p0=spec.p0, p1=p1,
                                        dependent=spec.dependent)
        out.append((s.l0, s.l1, s.p_hat))
    return out


# -- empirical threshold selection ----------------------------------------------


def _conservative_threshold(stats: np.ndarray, spend: float) -> tuple[float, float]:
    """Smallest observed value t with #{stats >= t} <= spend*n; (t, achieved).

    Masked (never-qualifying) entries are -inf and cannot be picked. When no
    path qualifies at all, +inf is returned (the bound stays unused).
    """
    n = stats.size
    target = int(math.floor(spend * n))
    if target < 10:
        raise DegenerateSpend(
            f"spend target {spend:.4g} needs {target} paths of {n}; widen n_boot")
    finite = np.sort(stats[np.isfinite(stats)])
    if finite.size == 0:
        return math.inf, 0.0
    u = np.unique(finite)  # ascending
    exceed = finite.size - np.searchsorted(finite, u, side="left")  # #{stats >= u[i]}
    ok = np.nonzero(exceed <= target)[0]
    if ok.size == 0:
        return float(np.nextafter(u[-1], np.inf)), 0.0
    t = float(u[ok[0]])
    return t, float(exceed[ok[0]]) / n


# -- public operations ------------------------------------------------------------


def _prepare(spec: CalibrationSpec, phase1: Phase1Result, workers: int | None):
    """Plug-ins plus the shared harvested path set."""
    if spec.mode == "parametric":
        theta = _theta_plugin(phase1, spec.q, spec.x_min)
        eta_tilde = phase1.eta_mle
        payload = (theta.intercept, theta.slope)
        harvest = _harvest_paths(spec, phase1, "parametric", payload, workers)
        plugin = {"kind": "parametric", "theta": [theta.intercept, theta.slope],
                  "eta_tilde": eta_tilde}
        return harvest, plugin, (theta, eta_tilde)
    levels, i_star, phi_hat, pi_rho_at = _iso_plugin(phase1, spec)
    payload = (levels, tuple(float(v) for v in phi_hat))
    harvest = _harvest_paths(spec, phase1, "grid", payload, workers)
    plugin = {"kind": "isotonic", "levels": list(levels), "i_star": int(i_star),
              "phi_hat": [float(v) for v in phi_hat]}
    return harvest, plugin, (levels, i_star, phi_hat, pi_rho_at)


def _final_l0_set(spec: CalibrationSpec, phase1: Phase1Result, harvest, ctx,
                  p_ref: float, side: str) -> np.ndarray:
    """Masked final-analysis statistics under the plug-in constrained at p_ref."""
    tau_K = spec.schedule.max_n
    m = spec.schedule.m
    eff0 = phase1.data.eff
    out = np.empty(len(harvest))
    if spec.mode == "parametric":
        theta, eta_tilde = ctx
        psi = _psi_constrained(phase1, eta_tilde, p_ref, spec.delta)
        for i, h in enumerate(harvest):
            z = _responses_parametric(h, m, eff0, psi)
            l0, p_hat = _final_stats_parametric(h, z, spec, tau_K)
            out[i] = l0 if p_hat > spec.p0 else -math.inf
        return out
    levels, i_star, phi_hat, pi_rho_at = ctx
    pi_c, rho_c = pi_rho_at(p_ref, side)
    p1_dummy = 0.5 * (spec.p0 + 1.0)  # l1 is discarded here
    for i, h in enumerate(harvest):
        z = _responses_grid(h, m, eff0, levels, np.asarray(pi_c), np.asarray(phi_hat), rho_c)
        counts = inf.DoseCounts.from_records(levels, h.doses[:tau_K], h.tox[:tau_K],
                                             [int(v) for v in z[:tau_K]])
        s = glr_statistics_isotonic(counts, h.level_at_tau[-1], p0=spec.p0, p1=p1_dummy,
                                    dependent=spec.dependent)
        out[i] = s.l0 if s.p_hat > spec.p0 else -math.inf
    return out


def implied_alternative(spec: CalibrationSpec, phase1: Phase1Result,
                        workers: int | None = None) -> tuple[float, float]:
    """(p1, C_alpha) of the fixed-sample test at the maximum sample size."""
    harvest, _, ctx = _prepare(spec, phase1, workers)
    return _implied_alternative_inner(spec, phase1, harvest, ctx)


def _implied_alternative_inner(spec, phase1, harvest, ctx) -> tuple[float, float]:
    stats0 = _final_l0_set(spec, phase1, harvest, ctx, spec.p0, "upper")
    c_alpha, _ = _conservative_threshold(stats0, spec.alpha)

    def power_at(p: float) -> float:
        stats = _final_l0_set(spec, phase1, harvest, ctx, p, "lower")
        return float(np.mean(stats >= c_alpha))

    hi = 1.0 - 1e-6
    p_hi_power = power_at(hi)
    if p_hi_power < 1.0 - spec.beta:
        raise Unattainable(
            f"power at p -> 1 is {p_hi_power:.4f} < {1 - spec.beta:.4f} "
            f"at n = {spec.schedule.max_n}", max_power=p_hi_power)
    lo = spec.p0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if mid <= spec.p0 or hi - lo < 2e-4:
            break
        if power_at(mid) >= 1.0 - spec.beta:
            hi = mid
        else:
            lo = mid
    return hi, c_alpha


def calibrate_thresholds(spec: CalibrationSpec, phase1: Phase1Result,
                         workers: int | None = None) -> CalibrationResult:
    """Full threshold determination per the three error-spend equations."""
    harvest, plugin, ctx = _prepare(spec, phase1, workers)
    if spec.p1_override is not None:
        p1 = spec.p1_override
        stats0 = _final_l0_set(spec, phase1, harvest, ctx, spec.p0, "upper")
        c_alpha, _ = _conservative_threshold(stats0, spec.alpha)
    else:
        p1, c_alpha = _implied_alternative_inner(spec, phase1, harvest, ctx)

    m = spec.schedule.m
    K = spec.schedule.n_analyses
    eff0 = phase1.data.eff

    def score_all(p_ref: float, side: str) -> list[list[tuple]]:
        if spec.mode == "parametric":
            theta, eta_tilde = ctx
            psi = _psi_constrained(phase1, eta_tilde, p_ref, spec.delta)
            return [_all_stats(h, _responses_parametric(h, m, eff0, psi), spec, p1)
                    for h in harvest]
        levels, i_star, phi_hat, pi_rho_at = ctx
        pi_c, rho_c = pi_rho_at(p_ref, side)
        return [_all_stats(h, _responses_grid(h, m, eff0, levels, np.asarray(pi_c),
                                              np.asarray(phi_hat), rho_c),
                           spec, p1, levels=levels)
                for h in harvest]

    # futility spend under the alternative plug-in
    paths1 = score_all(p1, "lower")
    fut_max = np.array([
        max((l1 if p_hat < p1 else -math.inf) for l0, l1, p_hat in path[:K - 1])
        if K > 1 else -math.inf
        for path in paths1])
    if K > 1:
        b_tilde, fut_spend = _conservative_threshold(fut_max, spec.epsilon * spec.beta)
    else:
        b_tilde, fut_spend = math.inf, 0.0

    # efficacy spends under the null plug-in
    paths0 = score_all(spec.p0, "upper")

    def first_futility(path) -> int:
        for k, (l0, l1, p_hat) in enumerate(path[:K - 1], start=1):
            if p_hat < p1 and l1 >= b_tilde:
                return k
        return K  # no futility crossing before the last analysis

    k_fut = np.array([first_futility(p) for p in paths0])
    eff_max = np.empty(len(paths0))
    for i, path in enumerate(paths0):
        vals = [(l0 if p_hat > spec.p0 else -math.inf)
                for (l0, l1, p_hat) in path[:min(k_fut[i], K - 1)]]
        eff_max[i] = max(vals) if vals else -math.inf
    if K > 1 and spec.early_efficacy:
        b, eff_spend = _conservative_threshold(eff_max, spec.epsilon * spec.alpha)
    else:
        b, eff_spend = math.inf, 0.0

    # without early efficacy stopping the whole alpha budget moves to the end
    final_target = (1.0 - spec.epsilon) * spec.alpha if spec.early_efficacy \
        else spec.alpha
    final_stat = np.empty(len(paths0))
    for i, path in enumerate(paths0):
        stopped = eff_max[i] >= b or k_fut[i] < K
        l0_K, _, p_hat_K = path[K - 1]
        final_stat[i] = l0_K if (not stopped and p_hat_K > spec.p0) else -math.inf
    c, final_spend = _conservative_threshold(final_stat, final_target)

    th = Thresholds(b=b, b_tilde=b_tilde, c=c, p0=spec.p0, p1=p1, alpha=spec.alpha,
                    beta=spec.beta, epsilon=spec.epsilon)
    diag = {"spend_futility": fut_spend, "spend_early_efficacy": eff_spend,
            "spend_final": final_spend, "overall_alpha_spend": eff_spend + final_spend,
            "n_boot": spec.n_boot, "c_alpha_fss": c_alpha}
    return CalibrationResult(thresholds=th, p1=p1, c_alpha_fss=c_alpha, plugin=plugin,
                             diagnostics=diag)


# -- verification runs -------------------------------------------------------------


def _verify_draw(spec: CalibrationSpec, phase1: Phase1Result, at_p: float,
                 side: str):
    """Outcome sampler under the boundary plug-in constrained at `at_p`."""
    if spec.mode == "parametric":
        theta, eta_tilde = _theta_plugin(phase1, spec.q, spec.x_min), phase1.eta_mle
        psi = _psi_constrained(phase1, eta_tilde, at_p, spec.delta)

        def draw(x: float, rng: np.random.Generator) -> tuple[int, int]:
            u_y = rng.random()
            u_z = rng.random()
            return int(u_y < tox_prob(x, theta)), int(u_z < eff_prob(x, psi))
    else:
        levels, i_star, phi_hat, pi_rho_at = _iso_plugin(phase1, spec)
        pi_c, rho_c = pi_rho_at(at_p, side)
        arr = np.asarray(levels)
        pi_c = np.asarray(pi_c)
        phi_arr = np.asarray(phi_hat)

        def draw(x: float, rng: np.random.Generator) -> tuple[int, int]:
            u_y = rng.random()
            u_z = rng.random()
            i = int(np.argmin(np.abs(arr - x)))
            y = int(u_y < phi_arr[i])
            if rho_c is None:
                return y, int(u_z < pi_c[i])
            cells = dale_cells(float(pi_c[i]), float(phi_arr[i]), float(rho_c[i]))
            p_z = (cells.p11 / phi_arr[i]) if y else (cells.p01 / (1.0 - phi_arr[i]))
            return y, int(u_z < p_z)
    return draw


def _verify_chunk(args) -> int:
    spec, phase1, thresholds, at_p, side, sd, lo, hi = args
    draw = _verify_draw(spec, phase1, at_p, side)
    cfg = _design_for(spec, spec.schedule, thresholds.p1)
    rejects = 0
    for rep in range(lo, hi):
        rng = np.random.default_rng([sd, rep])
        eng = Phase2Engine(cfg, thresholds, phase1)
        dec = eng.run(draw, rng)
        rejects += dec is not None and dec.verdict is Verdict.REJECT_H0
    return rejects


def bootstrap_reject_prob(spec: CalibrationSpec, phase1: Phase1Result,
                          thresholds: Thresholds, at_p: float, side: str = "upper",
                          n_boot: int | None = None, seed: int | None = None,
                          workers: int | None = None) -> tuple[float, float]:
    """Rejection frequency of the full stopped design under a boundary plug-in.

    Simulates complete Phase II paths (adaptive dosing plus interim stopping)
    with the efficacy plug-in constrained to rate `at_p` at the MTD estimate;
    returns (probability, binomial SE). Uses seeds independent of the
    calibration harvest unless `seed` matches. Replications are keyed by
    (seed, rep), so the answer does not depend on `workers`.
    """
    n = n_boot if n_boot is not None else spec.n_boot
    sd = seed if seed is not None else spec.seed + 1
    if workers is None or workers <= 1:
        rejects = _verify_chunk((spec, phase1, thresholds, at_p, side, sd, 0, n))
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        jobs = [(spec, phase1, thresholds, at_p, side, sd, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rejects = sum(ex.map(_verify_chunk, jobs))
    p = rejects / n
    return p, math.sqrt(p * (1.0 - p) / n)
