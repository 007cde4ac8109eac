"""Group-sequential GLR testing anchored at a moving MTD estimate.

At each interim analysis the efficacy data up to that point are compared
against the two hypothesis boundaries (response rate p0 and p1 at the current
MTD estimate) through generalized likelihood ratio statistics. Early
rejection, early futility stop, and the final-analysis decision are driven by
three calibrated thresholds (b, b_tilde, c). Efficacy is checked before
futility when both bounds are crossed at the same analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import inference as inf
from .models import mtd

__all__ = [
    "GroupSchedule",
    "Thresholds",
    "Verdict",
    "InterimDecision",
    "GlrStats",
    "glr_statistics_parametric",
    "glr_statistics_isotonic",
    "interim_decision",
    "estimate_mtd_continuous",
    "estimate_mtd_grid_parametric",
    "window_indices",
]


@dataclass(frozen=True)
class GroupSchedule:
    """Phase I size m plus the Phase II group sizes m_1..m_K.

    Analysis k happens once m + m_1 + ... + m_k subjects have outcomes.
    """

    m: int
    group_sizes: tuple[int, ...]

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("phase I size must be nonnegative")
        if len(self.group_sizes) == 0 or any(g <= 0 for g in self.group_sizes):
            raise ValueError("group sizes must be positive")
        object.__setattr__(self, "group_sizes", tuple(int(g) for g in self.group_sizes))

    @property
    def n_analyses(self) -> int:
        return len(self.group_sizes)

    def tau(self, k: int) -> int:
        """Cumulative sample size at analysis k (k = 0 gives the Phase I size)."""
        if not 0 <= k <= self.n_analyses:
            raise ValueError("analysis index out of range")
        return self.m + sum(self.group_sizes[:k])

    @property
    def max_n(self) -> int:
        return self.tau(self.n_analyses)


@dataclass(frozen=True)
class Thresholds:
    """Stopping boundaries and the hypotheses they were calibrated for."""

    b: float
    b_tilde: float
    c: float
    p0: float
    p1: float
    alpha: float | None = None
    beta: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if not 0.0 < self.p0 < self.p1 < 1.0:
            raise ValueError("need 0 < p0 < p1 < 1")
        for name in ("b", "b_tilde", "c"):
            v = getattr(self, name)
            if math.isnan(v) or v < 0.0:
                raise ValueError(f"threshold {name} must be nonnegative (inf allowed)")
        if self.epsilon is not None and not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")


class Verdict(Enum):
    CONTINUE = "continue"
    REJECT_H0 = "reject_h0"
    ACCEPT_H0 = "accept_h0"


@dataclass(frozen=True)
class InterimDecision:
    verdict: Verdict
    rule: str | None  # early_efficacy / early_futility / final_efficacy / final_futility
    k: int


@dataclass(frozen=True)
class GlrStats:
    """GLR statistics against both boundaries plus the fitted rate at the MTD."""

    l0: float
    l1: float
    p_hat: float


def window_indices(doses: Sequence[float], center: float, radius: float) -> list[int]:
    """Indices of records within `radius` of `center` (used to localize fits)."""
    return [i for i, x in enumerate(doses) if abs(x - center) <= radius]


def glr_statistics_parametric(doses, responses, *, eta_hat: float, p0: float, p1: float,
                              delta: float = inf.DEFAULT_DELTA,
                              slope_max: float | None = None,
                              window: float | None = None) -> GlrStats:
    """GLR statistics for the logistic efficacy model at the MTD estimate.

    l_0 tests the composite null curve(eta_hat) <= p0, l_1 the composite
    alternative curve(eta_hat) >= p1. By concavity the constrained supremum
    either equals the unconstrained one (constraint already satisfied, so
    l_j = 0 exactly) or sits on the equality boundary curve(eta_hat) = p_j.
    Degenerate all-equal responses are handled through the supremum itself
    (0, with fitted rate 0 or 1), so interim analyses never fail on them.
    """
    doses = np.asarray(doses, dtype=float)
    responses = np.asarray(responses, dtype=float)
    if window is not None:
        keep = np.abs(doses - eta_hat) <= window
        doses, responses = doses[keep], responses[keep]
        if doses.size == 0:
            raise ValueError("dose window excludes every record")
    xs, ns, ss = inf.aggregate_binary(doses, responses)
    sup, p_hat = inf.logistic_sup(xs, ns, ss, dose_ref=eta_hat, delta=delta, slope_max=slope_max)
    if p_hat <= p0:
        l0 = 0.0
    else:
        con0 = inf.constrained_logistic_mle(xs, ns, ss, dose_ref=eta_hat, p_ref=p0,
                                            delta=delta, slope_max=slope_max)
        l0 = max(0.0, sup - con0.loglik)
    if p_hat >= p1:
        l1 = 0.0
    else:
        con1 = inf.constrained_logistic_mle(xs, ns, ss, dose_ref=eta_hat, p_ref=p1,
                                            delta=delta, slope_max=slope_max)
        l1 = max(0.0, sup - con1.loglik)
    return GlrStats(l0=l0, l1=l1, p_hat=float(p_hat))


def glr_statistics_isotonic(counts: inf.DoseCounts, i_star: int, *, p0: float, p1: float,
                            dependent: bool = False) -> GlrStats:
    """GLR statistics for the order-restricted model at MTD level i_star.

    The null boundary constrains the response rate at i_star from above by
    p0, the alternative from below by p1; a statistic is exactly 0 when the
    unconstrained fit already satisfies that constraint. With `dependent`
    the per-level joint cell likelihood (with free cross ratios) replaces
    the independent Bernoulli likelihood.
    """
    if dependent:
        fit = inf.dependent_iso_mle(counts)
        fit0 = inf.dependent_iso_mle(counts, constraint=(i_star, p0, "upper"))
        fit1 = inf.dependent_iso_mle(counts, constraint=(i_star, p1, "lower"))
        return GlrStats(l0=max(0.0, fit.loglik - fit0.loglik),
                        l1=max(0.0, fit.loglik - fit1.loglik),
                        p_hat=float(fit.pi[i_star]))
    n = counts.n.astype(float)
    s = counts.s_eff.astype(float)
    pi_hat = inf.pava_isotonic_mle(s, n)
    ll = inf.bernoulli_loglik(pi_hat, s, n)
    pi0 = inf.constrained_isotonic_mle(pi_hat, i_star, p0, "upper")
    pi1 = inf.constrained_isotonic_mle(pi_hat, i_star, p1, "lower")
    return GlrStats(l0=max(0.0, ll - inf.bernoulli_loglik(pi0, s, n)),
                    l1=max(0.0, ll - inf.bernoulli_loglik(pi1, s, n)),
                    p_hat=float(pi_hat[i_star]))


def interim_decision(k: int, n_analyses: int, stats: GlrStats, th: Thresholds) -> InterimDecision:
    """Apply the stopping rules at analysis k (1-based) of n_analyses.

    Before the last analysis: reject early when the fitted rate clears p0 and
    l0 >= b; otherwise stop for futility when the fitted rate is below p1 and
    l1 >= b_tilde; otherwise continue. At the last analysis: reject exactly
    when the fitted rate clears p0 and l0 >= c. All threshold comparisons
    are inclusive.
    """
    if not 1 <= k <= n_analyses:
        raise ValueError("analysis index out of range")
    if k < n_analyses:
        if stats.p_hat > th.p0 and stats.l0 >= th.b:
            return InterimDecision(Verdict.REJECT_H0, "early_efficacy", k)
        if stats.p_hat < th.p1 and stats.l1 >= th.b_tilde:
            return InterimDecision(Verdict.ACCEPT_H0, "early_futility", k)
        return InterimDecision(Verdict.CONTINUE, None, k)
    if stats.p_hat > th.p0 and stats.l0 >= th.c:
        return InterimDecision(Verdict.REJECT_H0, "final_efficacy", k)
    return InterimDecision(Verdict.ACCEPT_H0, "final_futility", k)


def fit_mtd_continuous(doses, tox, *, q: float, x_min: float, x_max: float,
                       delta: float = inf.DEFAULT_DELTA,
                       slope_max: float | None = None,
                       fallback: float | None = None,
                       init: tuple[float, float] | None = None,
                       ) -> tuple[float, inf.MleReport | None]:
    """(MTD estimate, toxicity fit) from toxicity data.

    The estimate is the inverted logistic MLE clipped to the dose range.
    When the MLE does not exist, returns (`fallback`, None); with no
    fallback the error propagates. `init` seeds the Newton iteration.
    """
    xs, ns, ss = inf.aggregate_binary(doses, tox)
    try:
        rep = inf.logistic_mle(xs, ns, ss, delta=delta, slope_max=slope_max, init=init)
    except inf.NonexistentMleError:
        if fallback is None:
            raise
        return float(min(max(fallback, x_min), x_max)), None
    eta = mtd(_theta_of(rep), q)
    return float(min(max(eta, x_min), x_max)), rep


def estimate_mtd_continuous(doses, tox, *, q: float, x_min: float, x_max: float,
                            delta: float = inf.DEFAULT_DELTA,
                            slope_max: float | None = None,
                            fallback: float | None = None) -> float:
    """MTD estimate from toxicity data: inverted logistic MLE, clipped to range.

    When the toxicity MLE does not exist, returns `fallback` (a Bayes-type
    estimate supplied by the caller); with no fallback the error propagates.
    """
    eta, _ = fit_mtd_continuous(doses, tox, q=q, x_min=x_min, x_max=x_max, delta=delta,
                                slope_max=slope_max, fallback=fallback)
    return eta


def _theta_of(rep: inf.MleReport):
    from .models import ToxicityParams

    return ToxicityParams(intercept=rep.intercept, slope=rep.slope)


def estimate_mtd_grid_parametric(doses, tox, *, q: float, grid: Sequence[float],
                                 delta: float = inf.DEFAULT_DELTA,
                                 slope_max: float | None = None) -> int:
    """Grid-restricted MTD estimate under the logistic toxicity model.

    Profiles the toxicity likelihood over the grid: each level's score is the
    likelihood maximized subject to curve(level) = q, and the smallest level
    attaining the maximum (within numerical tolerance) wins. Always defined,
    because each equality-constrained fit exists over the capped slope range.
    """
    grid = np.asarray(grid, dtype=float)
    xs, ns, ss = inf.aggregate_binary(doses, tox)
    scores = np.empty(grid.size)
    for j, lam in enumerate(grid):
        rep = inf.constrained_logistic_mle(xs, ns, ss, dose_ref=float(lam), p_ref=q,
                                           delta=delta, slope_max=slope_max)
        scores[j] = rep.loglik
    best = float(np.max(scores))
    return int(np.nonzero(scores >= best - 1e-9)[0][0])
