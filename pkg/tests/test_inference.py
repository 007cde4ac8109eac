"""Likelihood machinery: logistic MLEs, isotonic fits, joint dependent fits.

The isotonic fits are checked against two independent oracles: exhaustive
enumeration of consecutive-block partitions (the solution is always piecewise
constant at pooled block rates) and the max-min windowed-mean formula.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phase12.inference import (
    DoseCounts,
    MleReport,
    NonexistentMleError,
    TrialData,
    aggregate_binary,
    bernoulli_loglik,
    constrained_isotonic_mle,
    constrained_isotonic_mle_exact,
    constrained_logistic_mle,
    dependent_iso_mle,
    logistic_loglik,
    logistic_mle,
    logistic_sup,
    pava_isotonic_mle,
)
from phase12.models import dale_cells, expit, logit


def pava_oracle(successes, trials):
    """Exact isotonic Bernoulli MLE by enumerating block partitions.

    The solution is constant at the pooled success rate within consecutive
    blocks, so searching all 2^(d-1) partitions and keeping the best one with
    nondecreasing block rates is exact. Only usable for small d.
    """
    successes = np.asarray(successes, dtype=float)
    trials = np.asarray(trials, dtype=float)
    d = trials.size
    best_ll, best_fit = -np.inf, None
    for cuts in itertools.product([0, 1], repeat=d - 1):
        bounds = [0] + [i + 1 for i in range(d - 1) if cuts[i]] + [d]
        fit = np.empty(d)
        rates = []
        ok = True
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            n_b = trials[lo:hi].sum()
            if n_b == 0:
                ok = False
                break
            r = successes[lo:hi].sum() / n_b
            rates.append(r)
            fit[lo:hi] = r
        if not ok or np.any(np.diff(rates) < 0):
            continue
        ll = bernoulli_loglik(fit, successes, trials)
        if ll > best_ll:
            best_ll, best_fit = ll, fit
    return best_fit, best_ll


def max_min_oracle(successes, trials):
    """Weighted max-min characterization: fit[i] = max_{s<=i} min_{t>=i} mean[s..t]."""
    successes = np.asarray(successes, dtype=float)
    trials = np.asarray(trials, dtype=float)
    d = trials.size
    out = np.empty(d)
    for i in range(d):
        best = -np.inf
        for s in range(i + 1):
            worst = np.inf
            for t in range(i, d):
                n_w = trials[s : t + 1].sum()
                if n_w > 0:
                    worst = min(worst, successes[s : t + 1].sum() / n_w)
            best = max(best, worst)
        out[i] = best
    return out


def random_counts(rng, d, n_max=6):
    trials = rng.integers(1, n_max + 1, size=d).astype(float)
    successes = rng.binomial(trials.astype(int), rng.uniform(0.1, 0.9)).astype(float)
    return successes, trials


class TestPava:
    def test_matches_partition_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            d = int(rng.integers(2, 5))
            successes, trials = random_counts(rng, d)
            fit = pava_isotonic_mle(successes, trials)
            oracle_fit, oracle_ll = pava_oracle(successes, trials)
            assert bernoulli_loglik(fit, successes, trials) == pytest.approx(
                oracle_ll, abs=1e-9
            )
            np.testing.assert_allclose(fit, oracle_fit, atol=1e-9)

    def test_matches_max_min_formula(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            d = int(rng.integers(2, 7))
            successes, trials = random_counts(rng, d)
            fit = pava_isotonic_mle(successes, trials)
            np.testing.assert_allclose(fit, max_min_oracle(successes, trials), atol=1e-10)

    def test_already_monotone_is_fixed_point(self):
        fit = pava_isotonic_mle([1.0, 4.0, 9.0], [10.0, 10.0, 10.0])
        np.testing.assert_allclose(fit, [0.1, 0.4, 0.9], atol=1e-12)

    def test_single_violation_pools(self):
        # rates (0.8, 0.2) pool to 0.5 over equal weights
        fit = pava_isotonic_mle([8.0, 2.0], [10.0, 10.0])
        np.testing.assert_allclose(fit, [0.5, 0.5], atol=1e-12)

    def test_empty_levels_inherit_left_value(self):
        fit = pava_isotonic_mle([1.0, 0.0, 3.0], [2.0, 0.0, 3.0])
        np.testing.assert_allclose(fit, [0.5, 0.5, 1.0], atol=1e-12)

    def test_leading_empty_level(self):
        fit = pava_isotonic_mle([0.0, 1.0], [0.0, 2.0])
        np.testing.assert_allclose(fit, [0.5, 0.5], atol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            pava_isotonic_mle([1.0], [0.0])
        with pytest.raises(ValueError):
            pava_isotonic_mle([3.0], [2.0])
        with pytest.raises(ValueError):
            pava_isotonic_mle([[1.0]], [[2.0]])

    @given(st.integers(min_value=0, max_value=2**30))
    @settings(max_examples=50, deadline=None)
    def test_properties(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 8))
        successes, trials = random_counts(rng, d)
        fit = pava_isotonic_mle(successes, trials)
        assert np.all(np.diff(fit) >= -1e-12)
        assert np.all((fit >= 0.0) & (fit <= 1.0))
        # pooling preserves the weighted total
        assert float(np.sum(fit * trials)) == pytest.approx(float(successes.sum()), abs=1e-9)


class TestConstrainedIsotonic:
    def oracle(self, successes, trials, i_star, p_j, side):
        """Best monotone vector with entries drawn from window means and p_j.

        The constrained solution's values are pooled window means clipped at
        the bound, so this finite family contains the true optimum.
        """
        successes = np.asarray(successes, dtype=float)
        trials = np.asarray(trials, dtype=float)
        d = trials.size
        values = {p_j}
        for s in range(d):
            for t in range(s, d):
                n_w = trials[s : t + 1].sum()
                if n_w > 0:
                    values.add(float(successes[s : t + 1].sum() / n_w))
        best = -np.inf
        for combo in itertools.product(sorted(values), repeat=d):
            if any(combo[i + 1] < combo[i] for i in range(d - 1)):
                continue
            if side == "upper" and combo[i_star] > p_j:
                continue
            if side == "lower" and combo[i_star] < p_j:
                continue
            best = max(best, bernoulli_loglik(np.array(combo), successes, trials))
        return best

    def test_exact_matches_enumeration_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            d = int(rng.integers(2, 4))
            successes, trials = random_counts(rng, d, n_max=4)
            i_star = int(rng.integers(0, d))
            p_j = float(rng.uniform(0.15, 0.85))
            side = "upper" if rng.random() < 0.5 else "lower"
            fit = constrained_isotonic_mle_exact(successes, trials, i_star, p_j, side)
            assert np.all(np.diff(fit) >= -1e-12)
            if side == "upper":
                assert fit[i_star] <= p_j + 1e-12
            else:
                assert fit[i_star] >= p_j - 1e-12
            ll = bernoulli_loglik(fit, successes, trials)
            assert ll == pytest.approx(self.oracle(successes, trials, i_star, p_j, side), abs=1e-9)

    def test_inactive_constraint_returns_unconstrained_fit(self):
        successes, trials = np.array([1.0, 4.0]), np.array([10.0, 10.0])
        fit = constrained_isotonic_mle_exact(successes, trials, 0, 0.5, "upper")
        np.testing.assert_allclose(fit, pava_isotonic_mle(successes, trials))

    def test_clamp_construction(self):
        pi_hat = np.array([0.2, 0.6, 0.7])
        up = constrained_isotonic_mle(pi_hat, 1, 0.5, "upper")
        np.testing.assert_allclose(up, [0.2, 0.5, 0.7])
        lo = constrained_isotonic_mle(pi_hat, 1, 0.65, "lower")
        np.testing.assert_allclose(lo, [0.2, 0.65, 0.7])

    def test_clamp_touches_only_levels_at_or_below_istar(self):
        pi_hat = np.array([0.2, 0.55, 0.6, 0.7])
        up = constrained_isotonic_mle(pi_hat, 2, 0.5, "upper")
        np.testing.assert_allclose(up, [0.2, 0.5, 0.5, 0.7])
        lo = constrained_isotonic_mle(pi_hat, 1, 0.58, "lower")
        np.testing.assert_allclose(lo, [0.2, 0.58, 0.6, 0.7])

    def test_clamp_validation(self):
        with pytest.raises(IndexError):
            constrained_isotonic_mle([0.5], 2, 0.5, "upper")
        with pytest.raises(ValueError):
            constrained_isotonic_mle([0.5], 0, 0.4, "sideways")

    def test_exact_never_beaten_by_clamp(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            d = int(rng.integers(2, 6))
            successes, trials = random_counts(rng, d)
            i_star = int(rng.integers(0, d))
            p_j = float(rng.uniform(0.1, 0.9))
            for side in ("upper", "lower"):
                exact = constrained_isotonic_mle_exact(successes, trials, i_star, p_j, side)
                clamp = constrained_isotonic_mle(
                    pava_isotonic_mle(successes, trials), i_star, p_j, side
                )
                ll_e = bernoulli_loglik(exact, successes, trials)
                ll_c = bernoulli_loglik(clamp, successes, trials)
                assert ll_e >= ll_c - 1e-9


DOSES_2 = np.array([0.0, 1.0])
TEN = np.array([10.0, 10.0])


class TestLogisticMle:
    def test_two_level_fit_is_saturated(self):
        # with two dose levels the MLE passes through both empirical rates
        rep = logistic_mle(DOSES_2, TEN, np.array([3.0, 7.0]))
        assert rep.converged
        assert rep.active is None
        assert expit(rep.intercept) == pytest.approx(0.3, abs=1e-8)
        assert expit(rep.intercept + rep.slope) == pytest.approx(0.7, abs=1e-8)
        assert rep.loglik == pytest.approx(
            bernoulli_loglik([0.3, 0.7], [3.0, 7.0], TEN), abs=1e-9
        )

    def test_loglik_field_consistent(self):
        rep = logistic_mle(DOSES_2, TEN, np.array([2.0, 6.0]))
        assert rep.loglik == pytest.approx(
            logistic_loglik(rep.intercept, rep.slope, DOSES_2, TEN, np.array([2.0, 6.0])),
            abs=1e-12,
        )

    def test_decreasing_rates_pin_slope_at_floor(self):
        rep = logistic_mle(DOSES_2, TEN, np.array([7.0, 3.0]), delta=1e-4)
        assert rep.active == "slope_lower"
        assert rep.slope == pytest.approx(1e-4)

    def test_slope_cap_binds_on_steep_data(self):
        rep = logistic_mle(DOSES_2, TEN, np.array([1.0, 9.0]), slope_max=0.5)
        assert rep.active == "slope_upper"
        assert rep.slope == pytest.approx(0.5)

    @pytest.mark.parametrize("succ", [[0.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
    def test_nonexistent_mle(self, succ):
        with pytest.raises(NonexistentMleError):
            logistic_mle(DOSES_2, TEN, np.array(succ))

    def test_validation(self):
        with pytest.raises(ValueError):
            logistic_mle(DOSES_2, TEN, np.array([3.0, 11.0]))
        with pytest.raises(ValueError):
            logistic_mle(DOSES_2, TEN, np.array([3.0, 7.0]), delta=0.0)

    def test_warm_start_changes_nothing(self):
        doses = np.array([140.0, 200.0, 250.0, 300.0])
        trials = np.array([6.0, 6.0, 6.0, 6.0])
        succ = np.array([1.0, 2.0, 3.0, 5.0])
        cold = logistic_mle(doses, trials, succ)
        warm = logistic_mle(doses, trials, succ, init=(cold.intercept * 0.9, cold.slope * 1.1))
        # both runs stop by Newton decrement, so they agree to optimizer tolerance
        assert warm.intercept == pytest.approx(cold.intercept, abs=1e-4)
        assert warm.slope == pytest.approx(cold.slope, rel=1e-4)

    def test_optimum_beats_neighborhood(self):
        rng = np.random.default_rng(11)
        doses = np.array([100.0, 180.0, 260.0, 340.0])
        for _ in range(20):
            trials = rng.integers(2, 8, size=4).astype(float)
            succ = np.minimum(trials, rng.integers(0, 8, size=4)).astype(float)
            try:
                rep = logistic_mle(doses, trials, succ)
            except NonexistentMleError:
                continue
            if rep.active is not None:
                continue
            ll = logistic_loglik(rep.intercept, rep.slope, doses, trials, succ)
            for da, ds in [(0.01, 0.0), (-0.01, 0.0), (0.0, 1e-5), (0.0, -1e-5)]:
                s = rep.slope + ds
                if s <= 0:
                    continue
                assert ll >= logistic_loglik(rep.intercept + da, s, doses, trials, succ) - 1e-12


def constrained_grid_oracle(doses, trials, successes, dose_ref, p_ref, delta, s_hi):
    """Two-stage slope grid search for the dose_ref-pinned logistic MLE."""
    l_ref = logit(p_ref)

    def ll(s):
        return logistic_loglik(l_ref - dose_ref * s, s, doses, trials, successes)

    grid = np.linspace(delta, s_hi, 4001)
    vals = [ll(s) for s in grid]
    j = int(np.argmax(vals))
    lo = grid[max(0, j - 1)]
    hi = grid[min(grid.size - 1, j + 1)]
    fine = np.linspace(lo, hi, 4001)
    return max(ll(s) for s in fine)


class TestConstrainedLogistic:
    def test_constraint_holds_exactly(self):
        rep = constrained_logistic_mle(
            DOSES_2, TEN, np.array([3.0, 7.0]), dose_ref=0.5, p_ref=0.4
        )
        assert expit(rep.intercept + rep.slope * 0.5) == pytest.approx(0.4, abs=1e-12)

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(12)
        doses = np.array([140.0, 200.0, 250.0, 300.0, 350.0])
        for _ in range(60):
            trials = rng.integers(1, 7, size=5).astype(float)
            succ = np.array([rng.integers(0, int(t) + 1) for t in trials], dtype=float)
            dose_ref = float(rng.uniform(150.0, 340.0))
            p_ref = float(rng.uniform(0.1, 0.9))
            rep = constrained_logistic_mle(doses, trials, succ, dose_ref=dose_ref, p_ref=p_ref)
            s_hi = 1e3 / (doses.max() - doses.min())
            oracle = constrained_grid_oracle(doses, trials, succ, dose_ref, p_ref, 1e-4, s_hi)
            assert rep.loglik == pytest.approx(oracle, abs=1e-6)
            assert rep.loglik >= oracle - 1e-6

    def test_never_above_unconstrained(self):
        rng = np.random.default_rng(13)
        doses = np.array([0.0, 1.0, 2.0])
        for _ in range(40):
            trials = rng.integers(2, 7, size=3).astype(float)
            succ = np.array([rng.integers(0, int(t) + 1) for t in trials], dtype=float)
            try:
                free = logistic_mle(doses, trials, succ)
            except NonexistentMleError:
                continue
            pinned = constrained_logistic_mle(doses, trials, succ, dose_ref=1.0, p_ref=0.37)
            assert pinned.loglik <= free.loglik + 1e-10


class TestLogisticSup:
    def test_degenerate_outcomes(self):
        ll, p = logistic_sup(DOSES_2, TEN, np.array([10.0, 10.0]), dose_ref=0.5)
        assert ll == 0.0 and p == 1.0
        ll, p = logistic_sup(DOSES_2, TEN, np.array([0.0, 0.0]), dose_ref=0.5)
        assert ll == 0.0 and p == 0.0

    def test_matches_mle_when_interior(self):
        succ = np.array([3.0, 7.0])
        rep = logistic_mle(DOSES_2, TEN, succ)
        ll, p = logistic_sup(DOSES_2, TEN, succ, dose_ref=0.5)
        assert ll == pytest.approx(rep.loglik, abs=1e-9)
        assert p == pytest.approx(expit(rep.intercept + 0.5 * rep.slope), abs=1e-6)

    def test_separated_data_does_not_raise(self):
        ll, p = logistic_sup(DOSES_2, TEN, np.array([0.0, 10.0]), dose_ref=1.0)
        assert np.isfinite(ll)
        assert 0.5 < p <= 1.0

    def test_dominates_family_members(self):
        rng = np.random.default_rng(14)
        doses = np.array([0.0, 0.5, 1.0])
        trials = np.array([5.0, 5.0, 5.0])
        succ = np.array([1.0, 2.0, 4.0])
        ll, _ = logistic_sup(doses, trials, succ, dose_ref=0.5)
        s_hi = 1e3 / 1.0
        for _ in range(200):
            a = rng.uniform(-5.0, 5.0)
            s = rng.uniform(1e-4, s_hi)
            assert ll >= logistic_loglik(a, s, doses, trials, succ) - 1e-9


class TestDataContainers:
    def test_aggregate_binary(self):
        doses, trials, succ = aggregate_binary([2.0, 1.0, 2.0, 1.0, 3.0], [1, 0, 0, 1, 1])
        np.testing.assert_allclose(doses, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(trials, [2.0, 2.0, 1.0])
        np.testing.assert_allclose(succ, [1.0, 1.0, 1.0])

    def test_trial_data(self):
        data = TrialData()
        data.add(140.0, 0, 1)
        data.add(200.0, 1, 0)
        assert len(data) == 2
        sub = data.subset([1])
        assert sub.doses == [200.0] and sub.tox == [1] and sub.eff == [0]

    def test_dose_counts_from_records(self):
        counts = DoseCounts.from_records(
            [140.0, 200.0], [140.0, 200.0, 200.0], [0, 1, 0], [1, 1, 0]
        )
        assert counts.n.tolist() == [1, 2]
        assert counts.s_tox.tolist() == [0, 1]
        assert counts.s_eff.tolist() == [1, 1]
        assert counts.n11.tolist() == [0, 1]

    def test_dose_counts_rejects_off_grid(self):
        with pytest.raises(ValueError):
            DoseCounts.from_records([140.0, 200.0], [170.0], [0], [0])

    def test_bernoulli_loglik_zero_rate_rule(self):
        # 0 * log(0) = 0: a rate of 0 with no successes is fine
        assert bernoulli_loglik([0.0, 1.0], [0.0, 2.0], [3.0, 2.0]) == 0.0
        assert bernoulli_loglik([0.0], [1.0], [2.0]) == -np.inf


def expected_counts(levels, pi, phi, rho, n_per):
    d = len(levels)
    c = DoseCounts(
        levels=np.asarray(levels, dtype=float),
        n00=np.zeros(d), n01=np.zeros(d), n10=np.zeros(d), n11=np.zeros(d),
    )
    for i in range(d):
        cells = dale_cells(pi[i], phi[i], rho[i])
        c.n00[i] = n_per * cells.p00
        c.n01[i] = n_per * cells.p01
        c.n10[i] = n_per * cells.p10
        c.n11[i] = n_per * cells.p11
    return c


class TestDependentIso:
    def test_recovers_monotone_truth_from_expected_counts(self):
        pi = [0.2, 0.4, 0.6]
        phi = [0.1, 0.3, 0.5]
        rho = [2.0, 2.0, 2.0]
        counts = expected_counts([1.0, 2.0, 3.0], pi, phi, rho, n_per=400.0)
        fit = dependent_iso_mle(counts)
        assert fit.converged
        np.testing.assert_allclose(fit.pi, pi, atol=2e-3)
        np.testing.assert_allclose(fit.phi, phi, atol=2e-3)
        np.testing.assert_allclose(fit.rho, rho, rtol=0.05)

    def test_marginals_monotone_and_constraint_respected(self):
        rng = np.random.default_rng(15)
        levels = np.array([1.0, 2.0, 3.0, 4.0])
        for _ in range(10):
            cells = rng.integers(0, 5, size=(4, 2, 2)).astype(float)
            cells[0, 0, 0] += 1  # keep every level nonempty
            counts = DoseCounts(
                levels=levels,
                n00=cells[:, 0, 0], n01=cells[:, 0, 1],
                n10=cells[:, 1, 0], n11=cells[:, 1, 1],
            )
            free = dependent_iso_mle(counts)
            assert np.all(np.diff(free.pi) >= -1e-9)
            assert np.all(np.diff(free.phi) >= -1e-9)
            bound = dependent_iso_mle(counts, constraint=(2, 0.3, "upper"))
            assert bound.pi[2] <= 0.3 + 1e-9
            assert bound.loglik <= free.loglik + 1e-6

    def test_constraint_side_validated(self):
        counts = expected_counts([1.0, 2.0], [0.3, 0.5], [0.1, 0.2], [1.0, 1.0], 50.0)
        with pytest.raises(ValueError):
            dependent_iso_mle(counts, constraint=(0, 0.5, "diagonal"))


def test_mle_report_is_frozen():
    rep = MleReport(0.0, 1.0, -2.0, True, 3)
    with pytest.raises(Exception):
        rep.intercept = 5.0
