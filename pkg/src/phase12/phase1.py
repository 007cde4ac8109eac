"""Phase I dose escalation and end-of-phase MTD estimation.

The escalation design is overdose-controlled: a discrete posterior over
(rho0, eta) = (toxicity rate at the lowest dose, MTD) starts uniform and is
updated after every toxicity outcome; each patient receives the omega-quantile
of the current MTD marginal, so the chance of recommending a dose above the
MTD stays at omega. A uniform sampler over a fixed dose grid is provided as
the design used with order-restricted Phase II analyses.

End-of-phase MTD plug-ins: the inverted logistic MLE (clipped to the dose
range), the posterior mean (a CRM-style estimate), and the final
omega-quantile (the dose the escalation rule itself would give next).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import inference as inf
from .models import expit, logit, mtd

__all__ = [
    "AllMassZeroError",
    "PriorGrid",
    "posterior_update",
    "ewoc_next_dose",
    "crm_estimate",
    "posterior_means",
    "Phase1Config",
    "Phase1Result",
    "run_phase1",
    "summarize_estimates",
]

# Outcome generator: (dose, rng) -> (toxicity, response). Each call must draw
# the toxicity uniform before the response uniform so response streams never
# perturb dosing.
DrawFn = Callable[[float, np.random.Generator], tuple[int, int]]


class AllMassZeroError(RuntimeError):
    """Posterior mass underflowed to zero (numerically impossible data)."""


@dataclass(frozen=True)
class PriorGrid:
    """Discrete posterior over (rho0, eta) with cached curve parameters.

    eta atoms span [x_min, x_max] endpoint-inclusive; rho0 atoms sit at cell
    midpoints of (0, q) so no atom degenerates. The eta = x_min column's
    curve is the steep-curve limit (computed at x_min + 1e-9), while the
    atom itself keeps the exact value x_min.
    """

    q: float
    x_min: float
    x_max: float
    rho_vals: np.ndarray
    eta_vals: np.ndarray
    mass: np.ndarray  # shape (n_rho, n_eta), sums to 1
    theta1: np.ndarray
    theta2: np.ndarray

    @classmethod
    def uniform(cls, q: float, x_min: float, x_max: float,
                n_rho: int = 101, n_eta: int = 101) -> "PriorGrid":
        if not 0.0 < q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if not x_min < x_max:
            raise ValueError("need x_min < x_max")
        rho_vals = q * (np.arange(n_rho) + 0.5) / n_rho
        eta_vals = np.linspace(x_min, x_max, n_eta)
        eta_eff = np.maximum(eta_vals, x_min + 1e-9)
        lq = logit(q)
        lr = logit(rho_vals)[:, None]
        theta2 = (lq - lr) / (eta_eff[None, :] - x_min)
        theta1 = lr - x_min * theta2
        mass = np.full((n_rho, n_eta), 1.0 / (n_rho * n_eta))
        return cls(q=q, x_min=x_min, x_max=x_max, rho_vals=rho_vals, eta_vals=eta_vals,
                   mass=mass, theta1=theta1, theta2=theta2)

    def with_mass(self, mass: np.ndarray) -> "PriorGrid":
        return PriorGrid(q=self.q, x_min=self.x_min, x_max=self.x_max,
                         rho_vals=self.rho_vals, eta_vals=self.eta_vals, mass=mass,
                         theta1=self.theta1, theta2=self.theta2)


def posterior_update(grid: PriorGrid, dose: float, tox: int) -> PriorGrid:
    """Multiply in one Bernoulli toxicity likelihood term and renormalize."""
    f = expit(grid.theta1 + grid.theta2 * float(dose))
    like = f if tox else 1.0 - f
    mass = grid.mass * like
    total = float(mass.sum())
    if total <= 0.0:
        raise AllMassZeroError(f"posterior mass vanished at dose {dose}, tox={tox}")
    return grid.with_mass(mass / total)


def _eta_marginal(grid: PriorGrid) -> np.ndarray:
    return grid.mass.sum(axis=0)


def ewoc_next_dose(grid: PriorGrid, omega: float) -> float:
    """Largest dose x with posterior P(eta < x) <= omega.

    Over the atomic marginal this is the atom at which the exclusive
    cumulative mass last sits at or below omega, the overdose-controlled
    dose recommendation.
    """
    if not 0.0 < omega < 1.0:
        raise ValueError("omega must lie in (0, 1)")
    w = _eta_marginal(grid)
    cum_excl = np.concatenate(([0.0], np.cumsum(w)[:-1]))
    idx = np.nonzero(cum_excl <= omega)[0][-1]
    return float(grid.eta_vals[idx])


def crm_estimate(grid: PriorGrid) -> float:
    """Posterior mean of the MTD."""
    return float(np.dot(_eta_marginal(grid), grid.eta_vals))


def posterior_means(grid: PriorGrid) -> tuple[float, float]:
    """Posterior means of (rho0, eta)."""
    return float(np.dot(grid.mass.sum(axis=1), grid.rho_vals)), crm_estimate(grid)


@dataclass(frozen=True)
class Phase1Config:
    """How Phase I enrolls and doses its m subjects."""

    design: str  # "ewoc" (continuous escalation) or "uniform_grid"
    m: int
    q: float
    x_min: float
    x_max: float
    grid: tuple[float, ...] | None = None
    omega: float = 0.25
    n_rho: int = 101
    n_eta: int = 101
    delta: float = inf.DEFAULT_DELTA

    def __post_init__(self):
        if self.design not in ("ewoc", "uniform_grid"):
            raise ValueError("design must be 'ewoc' or 'uniform_grid'")
        if self.design == "uniform_grid" and not self.grid:
            raise ValueError("uniform_grid design needs a dose grid")
        if self.m < 1:
            raise ValueError("phase I size must be positive")


@dataclass
class Phase1Result:
    data: inf.TrialData
    posterior: PriorGrid | None
    eta_mle: float                      # clipped MLE, Bayes/isotonic fallback
    eta_crm: float | None               # posterior mean (escalation design only)
    eta_ewoc: float | None              # final omega-quantile (escalation only)
    eta_iso_index: int | None           # MTD level index (grid design only)
    theta_rep: inf.MleReport | None     # toxicity MLE when it exists
    psi_rep: inf.MleReport | None       # efficacy MLE when it exists
    used_levels: tuple[float, ...] | None  # grid levels seen at least once


def run_phase1(config: Phase1Config, draw: DrawFn, rng: np.random.Generator) -> Phase1Result:
    """Enroll the Phase I cohort and compute end-of-phase estimates.

    Responses are drawn alongside toxicities (one uniform each, toxicity
    first) but never influence dosing; they simply join the data set that
    Phase II analyses will extend.
    """
    data = inf.TrialData()
    posterior = None
    if config.design == "ewoc":
        posterior = PriorGrid.uniform(config.q, config.x_min, config.x_max,
                                      config.n_rho, config.n_eta)
        for _ in range(config.m):
            x = ewoc_next_dose(posterior, config.omega)
            y, z = draw(x, rng)
            data.add(x, y, z)
            posterior = posterior_update(posterior, x, y)
    else:
        grid = np.asarray(config.grid, dtype=float)
        for _ in range(config.m):
            x = float(grid[int(rng.integers(grid.size))])
            y, z = draw(x, rng)
            data.add(x, y, z)
    return summarize_estimates(config, data, posterior)


def summarize_estimates(config: Phase1Config, data: inf.TrialData,
                        posterior: PriorGrid | None) -> Phase1Result:
    """End-of-phase plug-in estimates with the documented fallback chain."""
    eta_crm = crm_estimate(posterior) if posterior is not None else None
    eta_ewoc = ewoc_next_dose(posterior, config.omega) if posterior is not None else None

    eta_iso_index = None
    used_levels = None
    if config.grid is not None:
        levels = np.asarray(config.grid, dtype=float)
        used = sorted(set(data.doses))
        used_levels = tuple(float(u) for u in used)
        counts = inf.DoseCounts.from_records(used_levels, data.doses, data.tox, data.eff)
        phi_hat = inf.pava_isotonic_mle(counts.s_tox, counts.n)
        from .models import iso_mtd

        eta_iso_index = iso_mtd(phi_hat, config.q)

    xs, ns, ss = inf.aggregate_binary(data.doses, data.tox)
    theta_rep = None
    try:
        theta_rep = inf.logistic_mle(xs, ns, ss, delta=config.delta)
        from .models import ToxicityParams

        eta_mle = float(np.clip(mtd(ToxicityParams(theta_rep.intercept, theta_rep.slope),
                                    config.q), config.x_min, config.x_max))
    except inf.NonexistentMleError:
        if eta_crm is not None:
            eta_mle = eta_crm
        elif eta_iso_index is not None:
            eta_mle = float(used_levels[eta_iso_index])
        else:
            raise
    psi_rep = None
    try:
        xe, ne, se = inf.aggregate_binary(data.doses, data.eff)
        psi_rep = inf.logistic_mle(xe, ne, se, delta=config.delta)
    except inf.NonexistentMleError:
        psi_rep = None
    return Phase1Result(data=data, posterior=posterior, eta_mle=eta_mle, eta_crm=eta_crm,
                        eta_ewoc=eta_ewoc, eta_iso_index=eta_iso_index,
                        theta_rep=theta_rep, psi_rep=psi_rep, used_levels=used_levels)
