"""Exact two-stage single-arm designs (the Phase II benchmark).

A design (n1, n2, r1, r) enrolls n1 subjects, stops and accepts the null when
at most r1 respond, otherwise enrolls n2 more and rejects the null when the
total responder count exceeds r. Operating characteristics are exact binomial
sums evaluated in log space, and the search enumerates every admissible
design up to a total size cap, reporting the expected-size-optimal and the
minimax designs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimonDesign",
    "SimonOc",
    "SimonDesignReport",
    "SimonSearchResult",
    "InfeasibleDesignError",
    "binom_pmf",
    "binom_cdf",
    "simon_oc",
    "simon_search",
]


class InfeasibleDesignError(ValueError):
    """No design meets the error constraints within the size cap."""


@dataclass(frozen=True)
class SimonDesign:
    n1: int
    n2: int
    r1: int
    r: int

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("stage sizes must be positive")
        if not 0 <= self.r1 <= self.n1:
            raise ValueError("r1 must lie in [0, n1]")
        if not self.r1 <= self.r <= self.n1 + self.n2:
            raise ValueError("r must lie in [r1, n1 + n2]")

    @property
    def n_total(self) -> int:
        return self.n1 + self.n2


@dataclass(frozen=True)
class SimonOc:
    """Exact operating characteristics of a design at one response rate."""

    pet: float
    reject_prob: float
    expected_n: float


@dataclass(frozen=True)
class SimonDesignReport:
    design: SimonDesign
    alpha_attained: float
    power_attained: float
    pet_p0: float
    expected_n_p0: float


@dataclass(frozen=True)
class SimonSearchResult:
    optimal: SimonDesignReport
    minimax: SimonDesignReport


def _log_binom_coef(n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    lg = math.lgamma(n + 1)
    return lg - np.array([math.lgamma(j + 1) for j in k]) \
        - np.array([math.lgamma(n - j + 1) for j in k])


def binom_pmf(n: int, p: float) -> np.ndarray:
    """Vector of P(X = k), k = 0..n, accumulated in log space."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    k = np.arange(n + 1, dtype=float)
    if p == 0.0:
        out = np.zeros(n + 1)
        out[0] = 1.0
        return out
    if p == 1.0:
        out = np.zeros(n + 1)
        out[n] = 1.0
        return out
    logs = _log_binom_coef(n) + k * math.log(p) + (n - k) * math.log1p(-p)
    return np.exp(logs)


def binom_cdf(n: int, p: float) -> np.ndarray:
    """Vector of P(X <= k), k = 0..n."""
    return np.minimum(np.cumsum(binom_pmf(n, p)), 1.0)


def simon_oc(design: SimonDesign, p: float) -> SimonOc:
    """Exact PET, rejection probability, and expected size at response rate p."""
    pmf1 = binom_pmf(design.n1, p)
    cdf2 = binom_cdf(design.n2, p)
    pet = float(np.sum(pmf1[: design.r1 + 1]))
    reject = 0.0
    for x1 in range(design.r1 + 1, design.n1 + 1):
        j = design.r - x1
        if j < 0:
            tail = 1.0
        elif j >= design.n2:
            tail = 0.0
        else:
            tail = 1.0 - float(cdf2[j])
        reject += float(pmf1[x1]) * tail
    return SimonOc(pet=pet, reject_prob=reject, expected_n=design.n1 + (1.0 - pet) * design.n2)


def _report(design: SimonDesign, p0: float, p1: float) -> SimonDesignReport:
    oc0 = simon_oc(design, p0)
    oc1 = simon_oc(design, p1)
    return SimonDesignReport(design=design, alpha_attained=oc0.reject_prob,
                             power_attained=oc1.reject_prob, pet_p0=oc0.pet,
                             expected_n_p0=oc0.expected_n)


def simon_search(p0: float, p1: float, alpha: float, beta: float,
                 n_max: int = 100) -> SimonSearchResult:
    """Enumerate all two-stage designs meeting the error constraints.

    Feasibility: rejection probability <= alpha at p0 and >= 1 - beta at p1.
    For fixed (n1, r1, n2) the smallest total threshold r that satisfies the
    type-I bound maximizes power, so it is the only r worth checking. The
    optimal design minimizes the expected size under p0 (ties: smaller total,
    then n1, then r1); the minimax design minimizes the total size (ties:
    smaller expected size, then n1, then r1).
    """
    if not 0.0 < p0 < p1 < 1.0:
        raise ValueError("need 0 < p0 < p1 < 1")
    if not 0.0 < alpha < 1.0 or not 0.0 < beta < 1.0:
        raise ValueError("alpha and beta must lie in (0, 1)")

    pmf0 = [binom_pmf(n, p0) for n in range(n_max + 1)]
    pmf1 = [binom_pmf(n, p1) for n in range(n_max + 1)]
    cdf0 = [np.minimum(np.cumsum(v), 1.0) for v in pmf0]
    cdf1 = [np.minimum(np.cumsum(v), 1.0) for v in pmf1]

    best_opt_key = None
    best_opt = None
    best_mm_key = None
    best_mm = None

    for n1 in range(1, n_max):
        # stopping at stage 1 under p1 already counts against the type-II
        # budget, so r1 with P_p1(X1 <= r1) > beta can never reach the power
        r1_cands = [r1 for r1 in range(0, n1) if cdf1[n1][r1] <= beta]
        if not r1_cands:
            continue
        pmf0_1 = pmf0[n1]
        pmf1_1 = pmf1[n1]
        x1 = np.arange(n1 + 1)
        for n2 in range(1, n_max - n1 + 1):
            n = n1 + n2
            # survival of stage 2 indexed by j = r - x1 in [-n1, n - 1]
            j = np.arange(-n1, n)
            surv0 = np.where(j < 0, 1.0, np.where(j >= n2, 0.0,
                             1.0 - cdf0[n2][np.clip(j, 0, n2 - 1)]))
            surv1 = np.where(j < 0, 1.0, np.where(j >= n2, 0.0,
                             1.0 - cdf1[n2][np.clip(j, 0, n2 - 1)]))
            idx = np.arange(n)[None, :] - x1[:, None] + n1  # (x1, r) -> offset
            m0 = pmf0_1[:, None] * surv0[idx]
            m1 = pmf1_1[:, None] * surv1[idx]
            # tail sums over x1 >= r1 + 1
            t0 = np.flip(np.cumsum(np.flip(m0, 0), 0), 0)
            t1 = np.flip(np.cumsum(np.flip(m1, 0), 0), 0)
            for r1 in r1_cands:
                row0 = t0[r1 + 1, r1:]
                ok = row0 <= alpha
                if not ok.any():
                    continue
                roff = int(np.argmax(ok))
                power = float(t1[r1 + 1, r1 + roff])
                if power < 1.0 - beta:
                    continue
                en0 = n1 + (1.0 - float(cdf0[n1][r1])) * n2
                design = SimonDesign(n1=n1, n2=n2, r1=r1, r=r1 + roff)
                opt_key = (en0, n, n1, r1)
                mm_key = (n, en0, n1, r1)
                if best_opt_key is None or opt_key < best_opt_key:
                    best_opt_key, best_opt = opt_key, design
                if best_mm_key is None or mm_key < best_mm_key:
                    best_mm_key, best_mm = mm_key, design
    if best_opt is None:
        raise InfeasibleDesignError(
            f"no two-stage design meets alpha={alpha}, beta={beta} within n_max={n_max}")
    return SimonSearchResult(optimal=_report(best_opt, p0, p1),
                             minimax=_report(best_mm, p0, p1))
