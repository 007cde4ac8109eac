"""Maximum likelihood machinery for the trial engine.

Parametric fits are two-parameter logistic regressions with the slope
constrained to a positive floor (monotone dose-response is a modeling
assumption, not something small samples should be allowed to contradict).
Order-restricted fits are per-level Bernoulli MLEs under a monotonicity
constraint, computed by pooling (PAVA). Both come in unconstrained and
boundary-constrained flavors; the difference of their log likelihoods is the
generalized likelihood ratio statistic used by the sequential test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .models import dale_cells, expit, logit

__all__ = [
    "NonexistentMleError",
    "MleReport",
    "TrialData",
    "DoseCounts",
    "aggregate_binary",
    "bernoulli_loglik",
    "logistic_loglik",
    "logistic_mle",
    "constrained_logistic_mle",
    "logistic_sup",
    "pava_isotonic_mle",
    "constrained_isotonic_mle",
    "constrained_isotonic_mle_exact",
    "DependentIsoFit",
    "dependent_iso_mle",
]

DEFAULT_DELTA = 1e-4

# The slope cap makes every constrained 1-D problem compact. It is scaled to
# the dose span so the logistic saturates over a vanishing fraction of the
# dose range; real optima never get near it.
_SLOPE_CAP_SCALE = 1e3

_GRAD_TOL = 1e-9
# Newton decrement g' H^{-1} g, in log-likelihood units: scale-free where raw
# gradient norms mix units (the slope component carries a dose factor)
_DECREMENT_TOL = 1e-12
_MAX_NEWTON = 200


class NonexistentMleError(RuntimeError):
    """The likelihood has no maximizer (degenerate or separated outcomes)."""


@dataclass(frozen=True)
class MleReport:
    """A fitted logistic curve plus convergence diagnostics."""

    intercept: float
    slope: float
    loglik: float
    converged: bool
    n_iter: int
    active: str | None = None  # None, "slope_lower", or "slope_upper"


@dataclass
class TrialData:
    """Per-patient records: dose, toxicity indicator, efficacy indicator."""

    doses: list[float] = field(default_factory=list)
    tox: list[int] = field(default_factory=list)
    eff: list[int] = field(default_factory=list)

    def add(self, dose: float, y: int, z: int) -> None:
        self.doses.append(float(dose))
        self.tox.append(int(y))
        self.eff.append(int(z))

    def __len__(self) -> int:
        return len(self.doses)

    def subset(self, idx: Sequence[int]) -> "TrialData":
        return TrialData(
            doses=[self.doses[i] for i in idx],
            tox=[self.tox[i] for i in idx],
            eff=[self.eff[i] for i in idx],
        )


@dataclass
class DoseCounts:
    """Per-level joint outcome counts on a fixed dose grid.

    Cell n_yz counts patients with toxicity y and response z at each level.
    """

    levels: np.ndarray
    n00: np.ndarray
    n01: np.ndarray
    n10: np.ndarray
    n11: np.ndarray

    @classmethod
    def from_records(cls, levels: Sequence[float], doses: Sequence[float],
                     tox: Sequence[int], eff: Sequence[int]) -> "DoseCounts":
        levels = np.asarray(levels, dtype=float)
        d = levels.size
        cells = np.zeros((d, 2, 2), dtype=np.int64)
        for x, y, z in zip(doses, tox, eff):
            j = int(np.argmin(np.abs(levels - x)))
            if abs(levels[j] - x) > 1e-9:
                raise ValueError(f"dose {x} is not on the grid")
            cells[j, int(y), int(z)] += 1
        return cls(levels=levels, n00=cells[:, 0, 0].copy(), n01=cells[:, 0, 1].copy(),
                   n10=cells[:, 1, 0].copy(), n11=cells[:, 1, 1].copy())

    @property
    def n(self) -> np.ndarray:
        return self.n00 + self.n01 + self.n10 + self.n11

    @property
    def s_tox(self) -> np.ndarray:
        return self.n10 + self.n11

    @property
    def s_eff(self) -> np.ndarray:
        return self.n01 + self.n11


def aggregate_binary(x: Sequence[float], v: Sequence[int]):
    """Collapse per-subject (dose, 0/1 outcome) pairs to per-dose counts.

    Returns (doses, trials, successes) with doses sorted ascending.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    doses, inv = np.unique(x, return_inverse=True)
    trials = np.bincount(inv, minlength=doses.size).astype(float)
    successes = np.bincount(inv, weights=v, minlength=doses.size)
    return doses, trials, successes


def _xlogy(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    out = np.zeros(a.shape)
    nz = a != 0.0
    with np.errstate(divide="ignore"):
        out[nz] = a[nz] * np.log(b[nz])
    return out


def bernoulli_loglik(rates, successes, trials) -> float:
    """Sum of per-level Bernoulli log likelihoods with the 0*log(0) = 0 rule."""
    rates = np.asarray(rates, dtype=float)
    successes = np.asarray(successes, dtype=float)
    trials = np.asarray(trials, dtype=float)
    return float(np.sum(_xlogy(successes, rates) + _xlogy(trials - successes, 1.0 - rates)))


def logistic_loglik(intercept: float, slope: float, doses, trials, successes) -> float:
    """Binomial log likelihood of a logistic curve on aggregated counts."""
    lin = intercept + slope * np.asarray(doses, dtype=float)
    return float(np.sum(successes * lin - trials * np.logaddexp(0.0, lin)))


def _slope_cap(doses, slope_max):
    if slope_max is not None:
        return float(slope_max)
    span = float(np.max(doses) - np.min(doses))
    if span <= 0.0:
        return 1.0
    return _SLOPE_CAP_SCALE / span


def _separation(doses, trials, successes):
    """Classify the data's separation structure.

    Returns one of "all_success", "all_fail", "positive" (successes sit at or
    above every failure, slope wants +inf), "negative" (successes sit at or
    below every failure, slope wants -inf), or "overlap".
    """
    has_s = successes > 0
    has_f = successes < trials
    if not np.any(has_f):
        return "all_success"
    if not np.any(has_s):
        return "all_fail"
    min_s = np.min(doses[has_s])
    max_s = np.max(doses[has_s])
    min_f = np.min(doses[has_f])
    max_f = np.max(doses[has_f])
    if min_s >= max_f:
        return "positive"
    if max_s <= min_f:
        return "negative"
    return "overlap"


def _intercept_fit(doses, trials, successes, slope: float) -> tuple[float, int]:
    """Maximize the log likelihood over the intercept at a fixed slope.

    Requires mixed outcomes. The score is strictly decreasing in the
    intercept, so a bracketed Newton iteration cannot fail.
    """
    total_s = float(np.sum(successes))
    total_n = float(np.sum(trials))
    xbar = float(np.sum(trials * doses) / total_n)
    rate = min(max(total_s / total_n, 1e-12), 1.0 - 1e-12)
    a = logit(rate) - slope * xbar

    def score(av):
        return float(np.sum(successes - trials * expit(av + slope * doses)))

    lo, hi = a, a
    step = 1.0 + abs(slope) * (float(np.max(doses)) - float(np.min(doses)))
    for _ in range(200):
        if score(lo) > 0.0:
            break
        lo -= step
        step *= 2.0
    step = 1.0 + abs(slope) * (float(np.max(doses)) - float(np.min(doses)))
    for _ in range(200):
        if score(hi) < 0.0:
            break
        hi += step
        step *= 2.0
    a = 0.5 * (lo + hi)
    n_iter = 0
    for n_iter in range(1, 120):
        p = expit(a + slope * doses)
        g = float(np.sum(successes - trials * p))
        h = -float(np.sum(trials * p * (1.0 - p)))
        if abs(g) < _GRAD_TOL or (h < 0.0 and g * g / -h < _DECREMENT_TOL):
            break
        if g > 0.0:
            lo = a
        else:
            hi = a
        a_new = a - g / h if h < 0.0 else 0.5 * (lo + hi)
        if not lo < a_new < hi:
            a_new = 0.5 * (lo + hi)
        a = a_new
    return a, n_iter


def _profile_slope_fit(doses, trials, successes, s_lo, s_hi) -> MleReport:
    """Maximize over slope in [s_lo, s_hi], profiling out the intercept.

    The profiled log likelihood is concave in the slope and its derivative
    is the envelope score, strictly decreasing, so a bracketed Newton
    iteration on that score is exact. Used when the data are separated and
    the quadratic 2-D Newton path is unreliable.
    """

    def prof_parts(s):
        """(profiled intercept, envelope score, profiled second derivative)."""
        a, _ = _intercept_fit(doses, trials, successes, s)
        p = expit(a + s * doses)
        d = float(np.sum(doses * (successes - trials * p)))
        w = trials * p * (1.0 - p)
        h00 = float(np.sum(w))
        h01 = float(np.sum(w * doses))
        h11 = float(np.sum(w * doses * doses))
        h = -(h11 - h01 * h01 / h00) if h00 > 0.0 else 0.0
        return a, d, h

    a_lo, d_lo, _ = prof_parts(s_lo)
    if d_lo <= 0.0:
        ll = logistic_loglik(a_lo, s_lo, doses, trials, successes)
        return MleReport(a_lo, s_lo, ll, True, 1, active="slope_lower")
    a_hi, d_hi, _ = prof_parts(s_hi)
    if d_hi >= 0.0:
        ll = logistic_loglik(a_hi, s_hi, doses, trials, successes)
        return MleReport(a_hi, s_hi, ll, True, 1, active="slope_upper")
    lo, hi = s_lo, s_hi
    s = 0.5 * (lo + hi)
    a = a_lo
    n_iter = 0
    for n_iter in range(1, 200):
        a, d, h = prof_parts(s)
        if (abs(d) < _GRAD_TOL or (h < 0.0 and d * d / -h < _DECREMENT_TOL)
                or hi - lo < 1e-13 * max(1.0, abs(hi))):
            break
        if d > 0.0:
            lo = s
        else:
            hi = s
        s_new = s - d / h if h < 0.0 else 0.5 * (lo + hi)
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        s = s_new
    ll = logistic_loglik(a, s, doses, trials, successes)
    return MleReport(a, s, ll, True, n_iter + 1, active=None)


def _newton_2d(doses, trials, successes, a, s):
    ll = logistic_loglik(a, s, doses, trials, successes)
    n_iter = 0
    for n_iter in range(1, _MAX_NEWTON + 1):
        p = expit(a + s * doses)
        r = successes - trials * p
        g0 = float(np.sum(r))
        g1 = float(np.sum(r * doses))
        if max(abs(g0), abs(g1)) < _GRAD_TOL:
            return a, s, ll, True, n_iter
        w = trials * p * (1.0 - p)
        h00 = float(np.sum(w))
        h01 = float(np.sum(w * doses))
        h11 = float(np.sum(w * doses * doses))
        det = h00 * h11 - h01 * h01
        if det <= 1e-300 * max(1.0, h00 * h11):
            return a, s, ll, False, n_iter
        da = (h11 * g0 - h01 * g1) / det
        ds = (h00 * g1 - h01 * g0) / det
        if g0 * da + g1 * ds < _DECREMENT_TOL:
            return a, s, ll, True, n_iter
        step = 1.0
        for _ in range(60):
            ll_new = logistic_loglik(a + step * da, s + step * ds, doses, trials, successes)
            if ll_new > ll:
                a, s, ll = a + step * da, s + step * ds, ll_new
                break
            step *= 0.5
        else:
            return a, s, ll, g0 * da + g1 * ds < 1e-7, n_iter
    return a, s, ll, False, n_iter


def logistic_mle(doses, trials, successes, *, delta: float = DEFAULT_DELTA,
                 slope_max: float | None = None,
                 init: tuple[float, float] | None = None) -> MleReport:
    """Slope-constrained logistic MLE on aggregated counts.

    The slope is constrained to [delta, slope cap]. Raises
    NonexistentMleError when all outcomes are equal or when every success
    sits at or above every failure (the likelihood supremum is then only
    approached in the limit of an infinitely steep curve).

    `init` seeds the Newton iteration, e.g. with the fit from a one-patient
    smaller dataset; the likelihood is concave, so the start point affects
    speed only.
    """
    doses = np.asarray(doses, dtype=float)
    trials = np.asarray(trials, dtype=float)
    successes = np.asarray(successes, dtype=float)
    if np.any(successes < 0) or np.any(successes > trials):
        raise ValueError("successes must lie in [0, trials] per dose")
    s_hi = _slope_cap(doses, slope_max)
    if not 0.0 < delta < s_hi:
        raise ValueError("need 0 < delta < slope cap")

    sep = _separation(doses, trials, successes)
    if sep in ("all_success", "all_fail"):
        raise NonexistentMleError(f"degenerate outcomes ({sep}): intercept is unbounded")
    if np.unique(doses).size == 1:
        # Only the linear predictor at the single dose is identified; pin the
        # slope at its floor and report the saturated fit.
        rate = float(np.sum(successes) / np.sum(trials))
        a = logit(rate) - delta * float(doses[0])
        ll = logistic_loglik(a, delta, doses, trials, successes)
        return MleReport(a, delta, ll, True, 0, active="slope_lower")
    if sep == "positive":
        raise NonexistentMleError("separated outcomes: slope is unbounded above")
    if sep == "negative":
        a, it = _intercept_fit(doses, trials, successes, delta)
        ll = logistic_loglik(a, delta, doses, trials, successes)
        return MleReport(a, delta, ll, True, it, active="slope_lower")

    if init is not None:
        a0, s0 = float(init[0]), float(init[1])
    else:
        total_s = float(np.sum(successes))
        total_n = float(np.sum(trials))
        xbar = float(np.sum(trials * doses) / total_n)
        span = float(np.max(doses) - np.min(doses))
        s0 = min(max(delta, 2.0 / span), s_hi)
        a0 = logit(min(max(total_s / total_n, 1e-12), 1.0 - 1e-12)) - s0 * xbar
    a, s, ll, ok, n_iter = _newton_2d(doses, trials, successes, a0, s0)
    if not ok:
        # Overlapping data guarantee a finite interior maximum; fall back to
        # the slower profiled search rather than trust a stalled iteration.
        return _profile_slope_fit(doses, trials, successes, delta, s_hi)
    if s < delta:
        a, it = _intercept_fit(doses, trials, successes, delta)
        llc = logistic_loglik(a, delta, doses, trials, successes)
        return MleReport(a, delta, llc, True, n_iter + it, active="slope_lower")
    if s > s_hi:
        a, it = _intercept_fit(doses, trials, successes, s_hi)
        llc = logistic_loglik(a, s_hi, doses, trials, successes)
        return MleReport(a, s_hi, llc, True, n_iter + it, active="slope_upper")
    return MleReport(a, s, ll, True, n_iter, active=None)


def constrained_logistic_mle(doses, trials, successes, *, dose_ref: float, p_ref: float,
                             delta: float = DEFAULT_DELTA,
                             slope_max: float | None = None) -> MleReport:
    """Logistic MLE subject to curve(dose_ref) = p_ref exactly.

    Substituting intercept = logit(p_ref) - dose_ref * slope reduces the
    problem to a concave 1-D maximization over slope in [delta, slope cap];
    the score is strictly decreasing there, so a bracketed Newton iteration
    on the score is exact. The constraint holds to machine precision by
    construction.
    """
    doses = np.asarray(doses, dtype=float)
    trials = np.asarray(trials, dtype=float)
    successes = np.asarray(successes, dtype=float)
    s_hi = _slope_cap(doses, slope_max)
    if not 0.0 < delta < s_hi:
        raise ValueError("need 0 < delta < slope cap")
    l_ref = logit(p_ref)
    dx = doses - float(dose_ref)

    def score(s):
        p = expit(l_ref + s * dx)
        return float(np.sum(dx * (successes - trials * p)))

    def report(s, it, active):
        a = l_ref - float(dose_ref) * s
        ll = logistic_loglik(a, s, doses, trials, successes)
        return MleReport(a, s, ll, True, it, active=active)

    if score(delta) <= 0.0:
        return report(delta, 1, "slope_lower")
    if score(s_hi) >= 0.0:
        return report(s_hi, 1, "slope_upper")
    lo, hi = delta, s_hi
    s = 0.5 * (lo + hi)
    n_iter = 0
    for n_iter in range(1, 200):
        p = expit(l_ref + s * dx)
        g = float(np.sum(dx * (successes - trials * p)))
        h = -float(np.sum(trials * p * (1.0 - p) * dx * dx))
        if abs(g) < _GRAD_TOL or (h < 0.0 and g * g / -h < _DECREMENT_TOL):
            break
        if g > 0.0:
            lo = s
        else:
            hi = s
        s_new = s - g / h if h < 0.0 else 0.5 * (lo + hi)
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        s = s_new
        if hi - lo < 1e-15 * max(1.0, hi):
            break
    return report(s, n_iter, None)


def logistic_sup(doses, trials, successes, *, dose_ref: float,
                 delta: float = DEFAULT_DELTA,
                 slope_max: float | None = None) -> tuple[float, float]:
    """Likelihood supremum over the slope-capped logistic family.

    Returns (sup log likelihood, fitted probability at dose_ref). Unlike
    logistic_mle this never raises: for all-equal outcomes the supremum is 0
    with limiting fitted rate 0 or 1, and for separated outcomes the capped
    family still attains its maximum. This is the right object for
    likelihood-ratio statistics, which are defined through suprema.
    """
    doses = np.asarray(doses, dtype=float)
    trials = np.asarray(trials, dtype=float)
    successes = np.asarray(successes, dtype=float)
    sep = _separation(doses, trials, successes)
    if sep == "all_success":
        return 0.0, 1.0
    if sep == "all_fail":
        return 0.0, 0.0
    s_hi = _slope_cap(doses, slope_max)
    if np.unique(doses).size == 1:
        rate = float(np.sum(successes) / np.sum(trials))
        a = logit(rate) - delta * float(doses[0])
        return logistic_loglik(a, delta, doses, trials, successes), expit(a + delta * dose_ref)
    if sep == "overlap":
        try:
            rep = logistic_mle(doses, trials, successes, delta=delta, slope_max=slope_max)
        except NonexistentMleError:  # pragma: no cover - overlap guarantees existence
            rep = _profile_slope_fit(doses, trials, successes, delta, s_hi)
    else:
        rep = _profile_slope_fit(doses, trials, successes, delta, s_hi)
    return rep.loglik, expit(rep.intercept + rep.slope * dose_ref)


def pava_isotonic_mle(successes, trials) -> np.ndarray:
    """Nondecreasing per-level Bernoulli MLE by pooling adjacent violators.

    Levels with no observations carry the fitted value of the nearest
    nonempty block to the left (the first block's value for leading empties),
    which is what the min-max characterization assigns them.
    """
    successes = np.asarray(successes, dtype=float)
    trials = np.asarray(trials, dtype=float)
    if successes.shape != trials.shape or successes.ndim != 1:
        raise ValueError("successes and trials must be 1-D and congruent")
    if np.any(successes < 0) or np.any(successes > trials):
        raise ValueError("successes must lie in [0, trials] per level")
    if not np.any(trials > 0):
        raise ValueError("at least one level must have observations")
    # blocks hold [sum_s, sum_n, level_count]; a new level joins the stack and
    # merges leftward while the pooled rates violate the ordering
    idx = np.nonzero(trials > 0)[0]
    blocks: list[list[float]] = []
    for i in idx:
        blocks.append([float(successes[i]), float(trials[i]), 1])
        while len(blocks) >= 2 and blocks[-2][0] * blocks[-1][1] >= blocks[-1][0] * blocks[-2][1]:
            s2, n2, c2 = blocks.pop()
            blocks[-1][0] += s2
            blocks[-1][1] += n2
            blocks[-1][2] += c2
    per_level = np.empty(idx.size)
    pos = 0
    for s_b, n_b, c_b in blocks:
        per_level[pos:pos + c_b] = s_b / n_b
        pos += c_b
    # empty levels inherit the fitted value to their left (the first fitted
    # value for leading empties), matching the min-max characterization
    out = np.empty_like(trials, dtype=float)
    last = per_level[0]
    j = 0
    for i in range(trials.size):
        if trials[i] > 0:
            last = per_level[j]
            j += 1
        out[i] = last
    return out


def constrained_isotonic_mle(pi_hat, i_star: int, p_j: float, side: str) -> np.ndarray:
    """Clamp an isotonic fit so level i_star sits on the boundary p_j.

    side "upper" enforces pi[i_star] <= p_j by setting the contiguous block
    of levels at or below i_star that exceed p_j to p_j; side "lower"
    enforces pi[i_star] >= p_j by raising the block at or above i_star that
    fall short of it. The input is returned unchanged when it already
    satisfies the constraint. This is a pure function of the fitted vector;
    see constrained_isotonic_mle_exact for the counts-aware optimizer.
    """
    pi_hat = np.asarray(pi_hat, dtype=float).copy()
    if not 0 <= i_star < pi_hat.size:
        raise IndexError("i_star outside the grid")
    if side == "upper":
        if pi_hat[i_star] <= p_j:
            return pi_hat
        mask = np.zeros(pi_hat.size, dtype=bool)
        mask[: i_star + 1] = pi_hat[: i_star + 1] > p_j
        pi_hat[mask] = p_j
        return pi_hat
    if side == "lower":
        if pi_hat[i_star] >= p_j:
            return pi_hat
        mask = np.zeros(pi_hat.size, dtype=bool)
        mask[i_star:] = pi_hat[i_star:] < p_j
        pi_hat[mask] = p_j
        return pi_hat
    raise ValueError("side must be 'upper' or 'lower'")


def constrained_isotonic_mle_exact(successes, trials, i_star: int, p_j: float,
                                   side: str) -> np.ndarray:
    """Exact isotonic Bernoulli MLE with level i_star bounded by p_j.

    When the bound binds, the boundary level is pinned at p_j and the two
    sub-chains are refit independently and clipped at p_j (partial
    minimization over the boundary value is convex, so the bound binds at
    equality; the clipping is the bounded-isotonic truncation identity).
    Agrees with the clamp construction whenever the unconstrained fit did not
    pool i_star with levels on the far side of the bound.
    """
    successes = np.asarray(successes, dtype=float)
    trials = np.asarray(trials, dtype=float)
    pi_hat = pava_isotonic_mle(successes, trials)
    if side == "upper" and pi_hat[i_star] <= p_j:
        return pi_hat
    if side == "lower" and pi_hat[i_star] >= p_j:
        return pi_hat
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    d = pi_hat.size
    out = np.empty(d)
    out[i_star] = p_j
    if i_star > 0:
        if np.any(trials[:i_star] > 0):
            low = pava_isotonic_mle(successes[:i_star], trials[:i_star])
        else:
            low = np.full(i_star, p_j)
        out[:i_star] = np.minimum(low, p_j)
    if i_star < d - 1:
        if np.any(trials[i_star + 1:] > 0):
            high = pava_isotonic_mle(successes[i_star + 1:], trials[i_star + 1:])
        else:
            high = np.full(d - 1 - i_star, p_j)
        out[i_star + 1:] = np.maximum(high, p_j)
    return out


# ---------------------------------------------------------------------------
# Dependent (joint toxicity-response) order-restricted fit


_MARGIN_EPS = 1e-9
_LOG_RHO_BOUND = math.log(1e4)


def _level_loglik(pi_i: float, phi_i: float, rho_i: float,
                  n00: float, n01: float, n10: float, n11: float) -> float:
    cells = dale_cells(pi_i, phi_i, rho_i)
    total = 0.0
    for n_yz, p_yz in ((n00, cells.p00), (n01, cells.p01), (n10, cells.p10), (n11, cells.p11)):
        if n_yz > 0:
            if p_yz <= 0.0:
                return -math.inf
            total += n_yz * math.log(p_yz)
    return total


def _golden_max(f, lo: float, hi: float, iters: int = 80) -> tuple[float, float]:
    """Golden-section maximization of a unimodal f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _gen_pava(objectives, upper=None, lower=None) -> np.ndarray:
    """Isotonic maximizer of sum_i f_i(v_i) by pooling, with optional
    per-level bounds (bounds must themselves be nondecreasing).

    Each block's value is the numeric maximizer of its pooled objective over
    the block's bound window; adjacent blocks merge while their values
    violate the ordering.
    """
    d = len(objectives)
    upper = [1.0 - _MARGIN_EPS] * d if upper is None else list(upper)
    lower = [_MARGIN_EPS] * d if lower is None else list(lower)
    blocks: list[tuple[int, int]] = []  # inclusive index ranges
    values: list[float] = []

    def solve(i0, i1):
        lo = max(lower[i0:i1 + 1])
        hi = min(upper[i0:i1 + 1])
        if hi <= lo:
            return lo
        fs = objectives[i0:i1 + 1]

        def f(v):
            return sum(g(v) for g in fs)

        x, _ = _golden_max(f, lo, hi)
        return x

    for i in range(d):
        blocks.append((i, i))
        values.append(solve(i, i))
        while len(blocks) >= 2 and values[-2] >= values[-1] - 1e-14:
            i1 = blocks.pop()[1]
            values.pop()
            i0 = blocks[-1][0]
            blocks[-1] = (i0, i1)
            values[-1] = solve(i0, i1)
    out = np.empty(d)
    for (i0, i1), v in zip(blocks, values):
        out[i0:i1 + 1] = v
    return out


@dataclass
class DependentIsoFit:
    pi: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    loglik: float
    converged: bool
    n_sweeps: int


def dependent_iso_mle(counts: DoseCounts, *, constraint: tuple[int, float, str] | None = None,
                      tol: float = 1e-8, max_sweeps: int = 500) -> DependentIsoFit:
    """Order-restricted MLE of per-level (response, toxicity, cross ratio).

    Maximizes the joint cell likelihood over nondecreasing response and
    toxicity marginals with a free cross ratio per level, by blockwise cyclic
    ascent: a pooled isotonic update of the response marginals, the same for
    toxicity, then per-level 1-D cross-ratio updates, repeated until the log
    likelihood gain drops below tol. `constraint` = (i_star, p_j, side)
    additionally bounds the response marginal at level i_star ("upper" means
    pi[i_star] <= p_j). Cross ratios are searched on [1e-4, 1e4]; a fit
    pinned at that range simply reports the best iterate, flagged through
    `converged` when the sweep cap is hit instead of the tolerance.
    """
    d = counts.levels.size
    n = counts.n.astype(float)
    s_eff = counts.s_eff.astype(float)
    s_tox = counts.s_tox.astype(float)
    pi = np.clip(pava_isotonic_mle(s_eff, n), _MARGIN_EPS, 1 - _MARGIN_EPS)
    phi = np.clip(pava_isotonic_mle(s_tox, n), _MARGIN_EPS, 1 - _MARGIN_EPS)
    rho = np.ones(d)

    rows = [(float(counts.n00[i]), float(counts.n01[i]), float(counts.n10[i]), float(counts.n11[i]))
            for i in range(d)]

    def total_ll(pi_v, phi_v, rho_v):
        return sum(_level_loglik(pi_v[i], phi_v[i], rho_v[i], *rows[i]) for i in range(d))

    def pi_objectives():
        return [
            (lambda v, i=i: _level_loglik(v, phi[i], rho[i], *rows[i]))
            for i in range(d)
        ]

    def phi_objectives():
        return [
            (lambda v, i=i: _level_loglik(pi[i], v, rho[i], *rows[i]))
            for i in range(d)
        ]

    upper = None
    lower = None
    if constraint is not None:
        i_star, p_j, side = constraint
        if side == "upper":
            upper = [p_j if i <= i_star else 1.0 - _MARGIN_EPS for i in range(d)]
        elif side == "lower":
            lower = [p_j if i >= i_star else _MARGIN_EPS for i in range(d)]
        else:
            raise ValueError("side must be 'upper' or 'lower'")
        lo_arr = _MARGIN_EPS if lower is None else np.asarray(lower)
        hi_arr = 1.0 - _MARGIN_EPS if upper is None else np.asarray(upper)
        pi = np.maximum.accumulate(np.clip(pi, lo_arr, hi_arr))
        # bounds are nondecreasing, so the running max stays feasible

    ll = total_ll(pi, phi, rho)
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        pi_new = _gen_pava(pi_objectives(), upper=upper, lower=lower)
        ll_pi = total_ll(pi_new, phi, rho)
        if ll_pi >= ll:
            pi, ll = pi_new, ll_pi
        phi_new = _gen_pava(phi_objectives())
        ll_phi = total_ll(pi, phi_new, rho)
        if ll_phi >= ll:
            phi, ll = phi_new, ll_phi
        for i in range(d):
            if rows[i][0] + rows[i][1] + rows[i][2] + rows[i][3] == 0:
                continue

            def f_rho(t, i=i):
                return _level_loglik(pi[i], phi[i], math.exp(t), *rows[i])

            t_best, ll_i = _golden_max(f_rho, -_LOG_RHO_BOUND, _LOG_RHO_BOUND)
            cur = _level_loglik(pi[i], phi[i], rho[i], *rows[i])
            if ll_i > cur:
                rho[i] = math.exp(t_best)
        ll_new = total_ll(pi, phi, rho)
        if ll_new < ll - 1e-12:  # defensive; ascent steps never decrease
            ll_new = ll
        gain = ll_new - ll if sweep > 1 else math.inf
        ll = ll_new
        if sweep > 1 and gain < tol:
            converged = True
            break
    return DependentIsoFit(pi=pi, phi=phi, rho=rho, loglik=ll, converged=converged,
                           n_sweeps=sweep)
