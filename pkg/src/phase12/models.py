"""Dose-response models shared by every other module.

Toxicity and efficacy are two-parameter logistic curves in dose. The MTD is
the dose at which the toxicity curve crosses the target rate q. Joint
(toxicity, efficacy) outcomes at a dose are described either by conditional
logistic curves or by per-level marginals tied together with a cross ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ToxicityParams",
    "EfficacyParams",
    "CondEfficacyParams",
    "EwocParams",
    "JointCells",
    "InfeasibleJointError",
    "expit",
    "logit",
    "tox_prob",
    "eff_prob",
    "mtd",
    "mtd_discrete",
    "iso_mtd",
    "ewoc_to_theta",
    "logistic_from_endpoints",
    "eff_prob_at_mtd_dependent",
    "dale_cells",
]


def expit(u):
    """Numerically stable logistic function 1 / (1 + exp(-u)).

    Branches on the sign of u so neither exp overflows. Accepts scalars or
    arrays and preserves shape.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p):
    """Inverse of expit. Rejects p outside the open interval (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("logit requires probabilities strictly inside (0, 1)")
    out = np.log(p) - np.log1p(-p)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ToxicityParams:
    """Logistic toxicity curve P(tox at x) = expit(intercept + slope * x)."""

    intercept: float
    slope: float

    def __post_init__(self):
        if not self.slope > 0.0:
            raise ValueError("toxicity slope must be positive")


@dataclass(frozen=True)
class EfficacyParams:
    """Logistic efficacy curve P(response at x) = expit(intercept + slope * x)."""

    intercept: float
    slope: float


@dataclass(frozen=True)
class CondEfficacyParams:
    """Efficacy curves conditional on the toxicity outcome at the same dose."""

    given_no_tox: EfficacyParams
    given_tox: EfficacyParams


@dataclass(frozen=True)
class EwocParams:
    """(rho0, eta) parameterization of the toxicity curve.

    rho0 is the toxicity probability at the lowest permissible dose and eta
    is the MTD itself, which is the natural coordinate system for a Bayesian
    Phase I design with a prior on the MTD.
    """

    rho0: float
    eta: float


@dataclass(frozen=True)
class JointCells:
    """Joint (y, z) cell probabilities at one dose; y = toxicity, z = response."""

    p00: float
    p01: float
    p10: float
    p11: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p00, self.p01, self.p10, self.p11])

    @property
    def tox_marginal(self) -> float:
        return self.p10 + self.p11

    @property
    def eff_marginal(self) -> float:
        return self.p01 + self.p11


class InfeasibleJointError(ValueError):
    """Raised when (eff, tox, cross-ratio) marginals admit no joint law."""


def tox_prob(x, theta: ToxicityParams):
    """Toxicity probability at dose x (scalar or array)."""
    return expit(theta.intercept + theta.slope * np.asarray(x, dtype=float))


def eff_prob(x, psi: EfficacyParams):
    """Efficacy probability at dose x (scalar or array)."""
    return expit(psi.intercept + psi.slope * np.asarray(x, dtype=float))


def mtd(theta: ToxicityParams, q: float) -> float:
    """Dose where the toxicity curve crosses q: [logit(q) - intercept] / slope."""
    if not 0.0 < q < 1.0:
        raise ValueError("target toxicity rate q must lie in (0, 1)")
    return (logit(q) - theta.intercept) / theta.slope


def mtd_discrete(theta: ToxicityParams, q: float, grid: Sequence[float]) -> float:
    """Largest grid dose with toxicity probability <= q, else the lowest dose.

    The grid must be strictly increasing.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("dose grid must be a nonempty 1-D sequence")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("dose grid must be strictly increasing")
    ok = tox_prob(grid, theta) <= q
    if not np.any(ok):
        return float(grid[0])
    return float(grid[np.max(np.nonzero(ok)[0])])


def iso_mtd(phi: Sequence[float], q: float) -> int:
    """Index of the MTD level given per-level toxicity rates.

    Returns the largest index i with phi[i] <= q, or 0 when every level is
    above q. Indices are 0-based; phi is assumed nondecreasing.
    """
    phi = np.asarray(phi, dtype=float)
    ok = np.nonzero(phi <= q)[0]
    if ok.size == 0:
        return 0
    return int(ok[-1])


def ewoc_to_theta(params: EwocParams, q: float, x_min: float) -> ToxicityParams:
    """Convert (rho0, eta) coordinates to (intercept, slope).

    rho0 = tox prob at x_min and eta = MTD pin the logistic curve through two
    points on the logit scale. Requires 0 < rho0 <= q < 1 and eta > x_min
    (eta == x_min forces rho0 == q and is rejected as degenerate; rho0 == q
    with eta > x_min would need slope 0, also rejected).
    """
    if not 0.0 < params.rho0 <= q:
        raise ValueError("rho0 must lie in (0, q]")
    if not 0.0 < q < 1.0:
        raise ValueError("target toxicity rate q must lie in (0, 1)")
    if params.eta < x_min:
        raise ValueError("eta must not lie below x_min")
    if params.eta == x_min or params.rho0 == q:
        raise ValueError("degenerate (rho0, eta): curve through x_min has slope 0 or inf")
    slope = (logit(q) - logit(params.rho0)) / (params.eta - x_min)
    intercept = logit(params.rho0) - x_min * slope
    return ToxicityParams(intercept=intercept, slope=slope)


def logistic_from_endpoints(x_a: float, p_a: float, x_b: float, p_b: float) -> tuple[float, float]:
    """(intercept, slope) of the logistic curve through (x_a, p_a), (x_b, p_b)."""
    if x_a == x_b:
        raise ValueError("endpoint doses must differ")
    la, lb = logit(p_a), logit(p_b)
    slope = (lb - la) / (x_b - x_a)
    return la - x_a * slope, slope


def eff_prob_at_mtd_dependent(eta: float, q: float, cond: CondEfficacyParams) -> float:
    """Marginal response probability at the MTD under toxicity-conditional curves.

    P(z=1 at eta) = (1-q) P(z=1 | y=0, eta) + q P(z=1 | y=1, eta); the mixing
    weights are exact because the toxicity rate at the MTD is q by definition.
    """
    return (1.0 - q) * eff_prob(eta, cond.given_no_tox) + q * eff_prob(eta, cond.given_tox)


# Cells smaller than this in magnitude are treated as exact zeros: in exact
# arithmetic the cross-ratio construction below never produces a negative
# cell for rho > 0, so anything beyond float roundoff is a genuine error.
_CELL_DUST = 1e-12


def dale_cells(pi: float, phi: float, rho: float) -> JointCells:
    """Joint cells from marginals (pi = eff, phi = tox) and cross ratio rho.

    rho = p00*p11 / (p10*p01). For rho != 1 the joint response-and-toxicity
    cell is the root

        p11 = (a - sqrt(a^2 + b)) / (2 (rho - 1)),
        a = 1 + (pi + phi)(rho - 1),   b = -4 rho (rho - 1) pi phi,

    evaluated in the rationalized form 2 rho pi phi / (a + sqrt(a^2 + b)),
    which is the same branch without the rho -> 1 cancellation and reduces
    to the independence cell pi * phi at rho = 1.
    """
    if not 0.0 <= pi <= 1.0 or not 0.0 <= phi <= 1.0:
        raise ValueError("marginals must lie in [0, 1]")
    if not rho > 0.0:
        raise ValueError("cross ratio must be positive")
    if rho == 1.0:
        p11 = pi * phi
    else:
        a = 1.0 + (pi + phi) * (rho - 1.0)
        b = -4.0 * rho * (rho - 1.0) * pi * phi
        disc = a * a + b
        if disc < 0.0:
            if disc < -_CELL_DUST:
                raise InfeasibleJointError(
                    f"no joint law for pi={pi}, phi={phi}, rho={rho}: negative discriminant"
                )
            disc = 0.0
        p11 = 2.0 * rho * pi * phi / (a + math.sqrt(disc))
    cells = {
        "p11": p11,
        "p10": phi - p11,
        "p01": pi - p11,
        "p00": 1.0 - pi - phi + p11,
    }
    for name, value in cells.items():
        if value < 0.0:
            if value < -_CELL_DUST:
                raise InfeasibleJointError(
                    f"no joint law for pi={pi}, phi={phi}, rho={rho}: cell {name} = {value}"
                )
            cells[name] = 0.0
    return JointCells(**cells)
