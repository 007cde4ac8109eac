"""Monte Carlo operating characteristics of integrated Phase I-II designs.

Simulates the benchmarked arms over a shared truth and Phase I stage:

* "simon": Phase I, a plug-in MTD estimate (MLE, posterior mean, the
  escalation rule's own quantile, or the isotonic level), then a two-stage
  single-arm test with every Phase II subject at that fixed dose.
* "gs": Phase I, then the adaptive group-sequential engine (MTD re-estimated
  per patient unless disabled, GLR analyses per schedule).

Per-replication metrics follow the benchmark conventions: EN counts both
phases, Eff and OD are per-subject rates over everyone enrolled, and the
recommended dose is the arm's terminal MTD estimate (for fixed-dose arms,
the Phase I plug-in).

Replication r of arm a draws from generators keyed [seed, r] (Phase I,
shared across arms) and [seed, r, a+1] (Phase II), so results are identical
for any worker count and arms can be re-run in isolation.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import inference as inf
from .engine import DesignConfig, Phase2Engine
from .models import (CondEfficacyParams, EfficacyParams, ToxicityParams, dale_cells,
                     eff_prob, mtd, tox_prob)
from .phase1 import Phase1Config, Phase1Result, run_phase1
from .seqtest import GroupSchedule, Thresholds, Verdict
from .simon import SimonDesign

__all__ = [
    "ParametricTruth",
    "GridTruth",
    "SimonArm",
    "GsArm",
    "ScenarioConfig",
    "ArmMetrics",
    "OcReport",
    "run_scenario",
    "simulate_rep",
    "path_metrics",
]


# -- truth models -------------------------------------------------------------


@dataclass(frozen=True)
class ParametricTruth:
    """Logistic toxicity plus logistic efficacy (marginal or tox-conditional)."""

    theta: ToxicityParams
    psi: EfficacyParams | None = None
    cond: CondEfficacyParams | None = None

    def __post_init__(self):
        if (self.psi is None) == (self.cond is None):
            raise ValueError("give exactly one of psi (independent) or cond")

    def draw(self, x: float, rng: np.random.Generator) -> tuple[int, int]:
        u_y = rng.random()
        u_z = rng.random()
        y = int(u_y < tox_prob(x, self.theta))
        if self.psi is not None:
            z = int(u_z < eff_prob(x, self.psi))
        else:
            curve = self.cond.given_tox if y else self.cond.given_no_tox
            z = int(u_z < eff_prob(x, curve))
        return y, z

    def true_eta(self, q: float) -> float:
        return mtd(self.theta, q)

    def eff_at(self, x: float) -> float:
        if self.psi is not None:
            return float(eff_prob(x, self.psi))
        f = float(tox_prob(x, self.theta))
        return ((1.0 - f) * float(eff_prob(x, self.cond.given_no_tox))
                + f * float(eff_prob(x, self.cond.given_tox)))

    def to_dict(self) -> dict:
        d = {"kind": "parametric", "theta": [self.theta.intercept, self.theta.slope]}
        if self.psi is not None:
            d["psi"] = [self.psi.intercept, self.psi.slope]
        else:
            d["cond"] = {"given_no_tox": [self.cond.given_no_tox.intercept,
                                          self.cond.given_no_tox.slope],
                         "given_tox": [self.cond.given_tox.intercept,
                                       self.cond.given_tox.slope]}
        return d


@dataclass(frozen=True)
class GridTruth:
    """Per-level toxicity and response probabilities on a finite dose set.

    With `rho` set, (toxicity, response) at level i are drawn from the joint
    cell distribution with that cross ratio; otherwise independently.
    """

    levels: tuple[float, ...]
    phi: tuple[float, ...]
    pi: tuple[float, ...]
    rho: tuple[float, ...] | None = None

    def __post_init__(self):
        k = len(self.levels)
        if len(self.phi) != k or len(self.pi) != k:
            raise ValueError("phi and pi must match the dose levels")
        if self.rho is not None and len(self.rho) != k:
            raise ValueError("rho must match the dose levels")
        if list(self.levels) != sorted(set(self.levels)):
            raise ValueError("levels must be strictly increasing")

    def _index(self, x: float) -> int:
        arr = np.asarray(self.levels)
        j = int(np.argmin(np.abs(arr - x)))
        if abs(arr[j] - x) > 1e-9:
            raise ValueError(f"dose {x} is not a level of this truth")
        return j

    def draw(self, x: float, rng: np.random.Generator) -> tuple[int, int]:
        i = self._index(x)
        u_y = rng.random()
        u_z = rng.random()
        phi, pi = self.phi[i], self.pi[i]
        y = int(u_y < phi)
        if self.rho is None:
            return y, int(u_z < pi)
        cells = dale_cells(pi, phi, self.rho[i])
        if y:
            p_z = cells.p11 / phi if phi > 0.0 else 0.0
        else:
            p_z = cells.p01 / (1.0 - phi) if phi < 1.0 else 0.0
        return y, int(u_z < p_z)

    def true_eta(self, q: float) -> float:
        ok = [i for i, f in enumerate(self.phi) if f <= q]
        return float(self.levels[max(ok)]) if ok else float(self.levels[0])

    def eff_at(self, x: float) -> float:
        return float(self.pi[self._index(x)])

    def to_dict(self) -> dict:
        d = {"kind": "grid", "levels": list(self.levels), "phi": list(self.phi),
             "pi": list(self.pi)}
        if self.rho is not None:
            d["rho"] = list(self.rho)
        return d


def truth_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "parametric":
        psi = EfficacyParams(*d["psi"]) if "psi" in d else None
        cond = None
        if "cond" in d:
            cond = CondEfficacyParams(
                given_no_tox=EfficacyParams(*d["cond"]["given_no_tox"]),
                given_tox=EfficacyParams(*d["cond"]["given_tox"]))
        return ParametricTruth(theta=ToxicityParams(*d["theta"]), psi=psi, cond=cond)
    if kind == "grid":
        return GridTruth(levels=tuple(d["levels"]), phi=tuple(d["phi"]),
                         pi=tuple(d["pi"]),
                         rho=tuple(d["rho"]) if d.get("rho") is not None else None)
    raise ValueError(f"unknown truth kind {kind!r}")


# -- arms ---------------------------------------------------------------------


@dataclass(frozen=True)
class SimonArm:
    """Fixed-dose two-stage arm: Phase II runs at one plug-in MTD estimate."""

    name: str
    design: SimonDesign
    estimator: str = "mle"  # mle | crm | ewoc | iso

    def __post_init__(self):
        if self.estimator not in ("mle", "crm", "ewoc", "iso"):
            raise ValueError("estimator must be mle, crm, ewoc, or iso")


@dataclass(frozen=True)
class GsArm:
    """Group-sequential GLR arm driven by the Phase II engine."""

    name: str
    thresholds: Thresholds
    group_sizes: tuple[int, ...]
    analysis: str = "parametric"
    update_mtd: bool = True
    dependent: bool = False
    window: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    q: float
    x_min: float
    x_max: float
    truth: ParametricTruth | GridTruth
    phase1: Phase1Config
    arms: tuple
    n_reps: int
    seed: int

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be positive")
        if not self.arms:
            raise ValueError("at least one arm required")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ValueError("arm names must be unique")
        for a in self.arms:
            if isinstance(a, SimonArm) and a.estimator in ("crm", "ewoc") \
                    and self.phase1.design != "ewoc":
                raise ValueError(f"arm {a.name}: {a.estimator} needs the ewoc design")
            if isinstance(a, SimonArm) and a.estimator == "iso" \
                    and self.phase1.design != "uniform_grid":
                raise ValueError(f"arm {a.name}: iso estimator needs the grid design")
            if isinstance(a, GsArm) and a.analysis == "isotonic" \
                    and self.phase1.design != "uniform_grid":
                raise ValueError(f"arm {a.name}: isotonic analysis needs the grid design")

    def to_dict(self) -> dict:
        arms = []
        for a in self.arms:
            if isinstance(a, SimonArm):
                arms.append({"kind": "simon", "name": a.name, "estimator": a.estimator,
                             "design": {"n1": a.design.n1, "n2": a.design.n2,
                                        "r1": a.design.r1, "r": a.design.r}})
            else:
                th = a.thresholds
                arms.append({"kind": "gs", "name": a.name,
                             "thresholds": {"b": _num(th.b), "b_tilde": _num(th.b_tilde),
                                            "c": _num(th.c), "p0": th.p0, "p1": th.p1},
                             "group_sizes": list(a.group_sizes), "analysis": a.analysis,
                             "update_mtd": a.update_mtd, "dependent": a.dependent,
                             "window": a.window})
        p1 = self.phase1
        return {"q": self.q, "x_min": self.x_min, "x_max": self.x_max,
                "truth": self.truth.to_dict(),
                "phase1": {"design": p1.design, "m": p1.m, "omega": p1.omega,
                           "grid": list(p1.grid) if p1.grid else None,
                           "n_rho": p1.n_rho, "n_eta": p1.n_eta},
                "arms": arms, "n_reps": self.n_reps, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        p1 = d["phase1"]
        phase1 = Phase1Config(design=p1["design"], m=p1["m"], q=d["q"],
                              x_min=d["x_min"], x_max=d["x_max"],
                              grid=tuple(p1["grid"]) if p1.get("grid") else None,
                              omega=p1.get("omega", 0.25), n_rho=p1.get("n_rho", 101),
                              n_eta=p1.get("n_eta", 101))
        arms = []
        for a in d["arms"]:
            if a["kind"] == "simon":
                ds = a["design"]
                arms.append(SimonArm(name=a["name"], estimator=a.get("estimator", "mle"),
                                     design=SimonDesign(n1=ds["n1"], n2=ds["n2"],
                                                        r1=ds["r1"], r=ds["r"])))
            elif a["kind"] == "gs":
                th = a["thresholds"]
                arms.append(GsArm(
                    name=a["name"],
                    thresholds=Thresholds(b=_unnum(th["b"]), b_tilde=_unnum(th["b_tilde"]),
                                          c=_unnum(th["c"]), p0=th["p0"], p1=th["p1"]),
                    group_sizes=tuple(a["group_sizes"]), analysis=a.get("analysis", "parametric"),
                    update_mtd=a.get("update_mtd", True), dependent=a.get("dependent", False),
                    window=a.get("window")))
            else:
                raise ValueError(f"unknown arm kind {a['kind']!r}")
        return cls(q=d["q"], x_min=d["x_min"], x_max=d["x_max"],
                   truth=truth_from_dict(d["truth"]), phase1=phase1, arms=tuple(arms),
                   n_reps=d["n_reps"], seed=d["seed"])

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _num(x: float):
    """JSON-safe number: infinities become the strings json cannot carry."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _unnum(x) -> float:
    return float(x)


# -- per-replication simulation ----------------------------------------------


def path_metrics(doses, tox, eff, *, eta_true: float, eta_rec: float, rejected: bool,
                 eff_at_rec: float) -> tuple:
    """(reject, n, eff_rate, od_rate, eta_rec, sq_err, p_at_rec) for one path."""
    n = len(doses)
    eff_rate = float(sum(eff)) / n
    od_rate = sum(1 for x in doses if x > eta_true) / n
    return (1.0 if rejected else 0.0, float(n), eff_rate, od_rate, float(eta_rec),
            (eta_rec - eta_true) ** 2, eff_at_rec)


def _plugin_dose(arm: SimonArm, p1res: Phase1Result) -> float:
    if arm.estimator == "mle":
        return p1res.eta_mle
    if arm.estimator == "crm":
        return p1res.eta_crm
    if arm.estimator == "ewoc":
        return p1res.eta_ewoc
    return float(p1res.used_levels[p1res.eta_iso_index])


def _run_simon_arm(arm: SimonArm, truth, p1res: Phase1Result,
                   rng: np.random.Generator) -> tuple:
    x_fix = _plugin_dose(arm, p1res)
    doses = list(p1res.data.doses)
    tox = list(p1res.data.tox)
    eff = list(p1res.data.eff)
    d = arm.design
    stage1 = 0
    for _ in range(d.n1):
        y, z = truth.draw(x_fix, rng)
        doses.append(x_fix); tox.append(y); eff.append(z)
        stage1 += z
    rejected = False
    if stage1 > d.r1:
        total = stage1
        for _ in range(d.n2):
            y, z = truth.draw(x_fix, rng)
            doses.append(x_fix); tox.append(y); eff.append(z)
            total += z
        rejected = total > d.r
    return (doses, tox, eff, x_fix, rejected)


def _gs_design_config(scen: ScenarioConfig, arm: GsArm) -> DesignConfig:
    return DesignConfig(q=scen.q, p0=arm.thresholds.p0, p1=arm.thresholds.p1,
                        x_min=scen.x_min, x_max=scen.x_max,
                        schedule=GroupSchedule(m=scen.phase1.m, group_sizes=arm.group_sizes),
                        analysis=arm.analysis, update_mtd=arm.update_mtd,
                        grid=scen.phase1.grid if arm.analysis == "isotonic" else None,
                        dependent=arm.dependent, window=arm.window)


def simulate_rep(scen: ScenarioConfig, rep: int) -> list[tuple | None]:
    """All arms' per-path metric tuples for replication `rep` (None = failure)."""
    truth = scen.truth
    rng1 = np.random.default_rng([scen.seed, rep])
    p1res = run_phase1(scen.phase1, truth.draw, rng1)
    eta_true = truth.true_eta(scen.q)
    out = []
    for idx, arm in enumerate(scen.arms):
        rng2 = np.random.default_rng([scen.seed, rep, idx + 1])
        try:
            if isinstance(arm, SimonArm):
                doses, tox, eff, eta_rec, rejected = _run_simon_arm(arm, truth, p1res, rng2)
            else:
                eng = Phase2Engine(_gs_design_config(scen, arm), arm.thresholds, p1res)
                dec = eng.run(truth.draw, rng2)
                st = eng.state
                doses, tox, eff = st.data.doses, st.data.tox, st.data.eff
                eta_rec = st.eta_hat
                rejected = dec.verdict is Verdict.REJECT_H0
            out.append(path_metrics(doses, tox, eff, eta_true=eta_true, eta_rec=eta_rec,
                                    rejected=rejected, eff_at_rec=truth.eff_at(eta_rec)))
        except (inf.NonexistentMleError, ValueError, ArithmeticError):
            out.append(None)
    return out


# -- aggregation ---------------------------------------------------------------


@dataclass
class ArmMetrics:
    name: str
    n_reps: int
    n_failures: int
    p_reject: float
    p_reject_se: float
    en: float
    en_se: float
    eff: float
    eff_se: float
    od: float
    od_se: float
    rmse_eta: float
    rmse_eta_se: float
    p_at_rec: float
    p_at_rec_se: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class OcReport:
    seed: int
    n_reps: int
    config_hash: str
    scenario: dict
    arms: list[ArmMetrics] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "n_reps": self.n_reps, "config_hash": self.config_hash,
                "scenario": self.scenario, "arms": [a.to_dict() for a in self.arms]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        cols = ["p_reject", "p_reject_se", "en", "en_se", "eff", "eff_se", "od", "od_se",
                "rmse_eta", "rmse_eta_se", "p_at_rec", "p_at_rec_se", "n_failures"]
        lines = ["arm,metric,value"]
        for a in self.arms:
            d = a.to_dict()
            for c in cols:
                lines.append(f"{a.name},{c},{d[c]}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        rows = [("arm", "P(rej H0)", "EN", "Eff", "OD", "RMSE(eta)", "p(eta_rec)")]
        for a in self.arms:
            rows.append((a.name, f"{a.p_reject:.3f}", f"{a.en:.1f}", f"{a.eff:.3f}",
                         f"{a.od:.3f}", f"{a.rmse_eta:.1f}", f"{a.p_at_rec:.3f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        out = []
        for j, r in enumerate(rows):
            out.append("  ".join(s.ljust(w) for s, w in zip(r, widths)))
            if j == 0:
                out.append("  ".join("-" * w for w in widths))
        return "\n".join(out) + "\n"


def _chunk_worker(args) -> list[list[tuple | None]]:
    scen_dict, lo, hi = args
    scen = ScenarioConfig.from_dict(scen_dict)
    return [simulate_rep(scen, r) for r in range(lo, hi)]


def run_scenario(scen: ScenarioConfig, workers: int | None = None) -> OcReport:
    """Run all replications and aggregate; identical output for any `workers`."""
    R = scen.n_reps
    if workers is None or workers <= 1:
        rows = [simulate_rep(scen, r) for r in range(R)]
    else:
        bounds = np.linspace(0, R, workers + 1).astype(int)
        jobs = [(scen.to_dict(), int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_worker, jobs))
        rows = [rep for chunk in chunks for rep in chunk]

    report = OcReport(seed=scen.seed, n_reps=R, config_hash=scen.config_hash(),
                      scenario=scen.to_dict())
    for idx, arm in enumerate(scen.arms):
        vals = [row[idx] for row in rows if row[idx] is not None]
        n_fail = R - len(vals)
        if n_fail * 1000 >= R and n_fail > 0:  # unresolved failures capped at 0.1%
            raise RuntimeError(f"arm {arm.name}: {n_fail}/{R} replications failed")
        a = np.asarray(vals)
        n = a.shape[0]

        def mean_se(col):
            col_mean = float(np.mean(col))
            return col_mean, float(np.std(col, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

        p_rej = float(np.mean(a[:, 0]))
        p_rej_se = math.sqrt(p_rej * (1 - p_rej) / n)
        en, en_se = mean_se(a[:, 1])
        eff, eff_se = mean_se(a[:, 2])
        od, od_se = mean_se(a[:, 3])
        mse, mse_se = mean_se(a[:, 5])
        rmse = math.sqrt(mse)
        rmse_se = mse_se / (2 * rmse) if rmse > 0 else 0.0
        prec, prec_se = mean_se(a[:, 6])
        report.arms.append(ArmMetrics(name=arm.name, n_reps=n, n_failures=n_fail,
                                      p_reject=p_rej, p_reject_se=p_rej_se, en=en,
                                      en_se=en_se, eff=eff, eff_se=eff_se, od=od,
                                      od_se=od_se, rmse_eta=rmse, rmse_eta_se=rmse_se,
                                      p_at_rec=prec, p_at_rec_se=prec_se))
    return report
