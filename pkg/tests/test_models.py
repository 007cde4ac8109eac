"""Dose-response model primitives: logistic curves, MTD maps, joint cells."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phase12.models import (
    CondEfficacyParams,
    EfficacyParams,
    EwocParams,
    InfeasibleJointError,
    ToxicityParams,
    dale_cells,
    eff_prob,
    eff_prob_at_mtd_dependent,
    ewoc_to_theta,
    expit,
    iso_mtd,
    logistic_from_endpoints,
    logit,
    mtd,
    mtd_discrete,
    tox_prob,
)

# Benchmark toxicity curve: 10% toxicity at dose 140, MTD 250 at q = 1/3.
THETA = ToxicityParams(-4.1115, 0.0136734)
Q = 1.0 / 3.0


class TestExpitLogit:
    def test_expit_center(self):
        assert expit(0.0) == 0.5

    def test_expit_saturates_without_overflow(self):
        # exp(-u) overflows for u < -709 unless the branch flips.
        with np.errstate(over="raise"):
            assert expit(800.0) == 1.0
            assert 0.0 < expit(-700.0) < 1e-300
            assert expit(-800.0) == 0.0

    def test_expit_array_shape(self):
        u = np.array([[-2.0, 0.0], [3.0, 50.0]])
        out = expit(u)
        assert out.shape == u.shape
        assert np.all((out > 0.0) & (out <= 1.0))

    def test_logit_center(self):
        assert logit(0.5) == 0.0

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.1])
    def test_logit_rejects_boundary(self, p):
        with pytest.raises(ValueError):
            logit(p)

    @given(st.floats(min_value=-20.0, max_value=20.0))
    def test_round_trip(self, u):
        # 1 - expit(u) quantizes near 1, so the recovered u drifts ~exp(|u|) ulps.
        assert logit(expit(u)) == pytest.approx(u, abs=1e-6)

    @given(st.floats(min_value=1e-12, max_value=1.0 - 1e-12))
    def test_round_trip_prob_side(self, p):
        assert expit(logit(p)) == pytest.approx(p, rel=1e-9)


class TestCurves:
    def test_tox_prob_known_point(self):
        # intercept + slope * 140 = -4.1115 + 1.914276 = -2.197224 = logit(0.1)
        assert tox_prob(140.0, THETA) == pytest.approx(0.1, abs=1e-6)

    def test_slope_must_be_positive(self):
        with pytest.raises(ValueError):
            ToxicityParams(0.0, 0.0)
        with pytest.raises(ValueError):
            ToxicityParams(0.0, -1.0)

    def test_efficacy_curve_unconstrained_slope(self):
        psi = EfficacyParams(2.0, -0.01)
        assert eff_prob(0.0, psi) == pytest.approx(expit(2.0))

    def test_curves_vectorized(self):
        x = np.array([140.0, 250.0, 425.0])
        p = tox_prob(x, THETA)
        assert p.shape == (3,)
        assert np.all(np.diff(p) > 0.0)


class TestMtd:
    def test_inversion(self):
        eta = mtd(THETA, Q)
        assert tox_prob(eta, THETA) == pytest.approx(Q, abs=1e-12)
        assert eta == pytest.approx(250.0, abs=1e-3)

    @given(
        st.floats(min_value=-10.0, max_value=10.0),
        st.floats(min_value=1e-3, max_value=10.0),
        st.floats(min_value=0.05, max_value=0.95),
    )
    def test_inversion_random(self, intercept, slope, q):
        theta = ToxicityParams(intercept, slope)
        assert tox_prob(mtd(theta, q), theta) == pytest.approx(q, abs=1e-9)

    def test_q_domain(self):
        with pytest.raises(ValueError):
            mtd(THETA, 0.0)
        with pytest.raises(ValueError):
            mtd(THETA, 1.0)

    def test_discrete_picks_largest_safe_level(self):
        grid = [140.0, 200.0, 250.0, 300.0, 350.0, 425.0]
        # tox(250) is just under 1/3 for this curve, tox(300) is near 0.5.
        assert mtd_discrete(THETA, Q, grid) == 250.0

    def test_discrete_falls_to_lowest_when_all_toxic(self):
        hot = ToxicityParams(5.0, 0.01)
        assert mtd_discrete(hot, Q, [140.0, 250.0]) == 140.0

    def test_discrete_validates_grid(self):
        with pytest.raises(ValueError):
            mtd_discrete(THETA, Q, [])
        with pytest.raises(ValueError):
            mtd_discrete(THETA, Q, [200.0, 200.0])
        with pytest.raises(ValueError):
            mtd_discrete(THETA, Q, [250.0, 140.0])

    def test_iso_mtd(self):
        assert iso_mtd([0.1, 0.2, 0.4], Q) == 1
        assert iso_mtd([0.5, 0.6], Q) == 0
        assert iso_mtd([0.05, 0.1, 0.2], Q) == 2


class TestEwocCoordinates:
    def test_round_trip(self):
        theta = ewoc_to_theta(EwocParams(rho0=0.2, eta=350.0), q=Q, x_min=140.0)
        assert tox_prob(140.0, theta) == pytest.approx(0.2, abs=1e-12)
        assert mtd(theta, Q) == pytest.approx(350.0, rel=1e-12)

    @given(
        st.floats(min_value=0.01, max_value=0.3),
        st.floats(min_value=150.0, max_value=1000.0),
    )
    def test_round_trip_random(self, rho0, eta):
        theta = ewoc_to_theta(EwocParams(rho0, eta), q=Q, x_min=140.0)
        assert theta.slope > 0.0
        assert tox_prob(140.0, theta) == pytest.approx(rho0, rel=1e-9)
        assert mtd(theta, Q) == pytest.approx(eta, rel=1e-9)

    def test_degenerate_rejections(self):
        with pytest.raises(ValueError):
            ewoc_to_theta(EwocParams(rho0=0.2, eta=140.0), q=Q, x_min=140.0)
        with pytest.raises(ValueError):
            ewoc_to_theta(EwocParams(rho0=Q, eta=350.0), q=Q, x_min=140.0)
        with pytest.raises(ValueError):
            ewoc_to_theta(EwocParams(rho0=0.5, eta=350.0), q=Q, x_min=140.0)
        with pytest.raises(ValueError):
            ewoc_to_theta(EwocParams(rho0=0.2, eta=100.0), q=Q, x_min=140.0)


class TestEndpointFit:
    def test_reproduces_endpoints(self):
        a, b = logistic_from_endpoints(250.0, 0.5, 425.0, 0.9)
        psi = EfficacyParams(a, b)
        assert eff_prob(250.0, psi) == pytest.approx(0.5, abs=1e-12)
        assert eff_prob(425.0, psi) == pytest.approx(0.9, abs=1e-12)

    def test_decreasing_curve_allowed(self):
        a, b = logistic_from_endpoints(0.0, 0.9, 1.0, 0.1)
        assert b < 0.0

    def test_rejects_equal_doses(self):
        with pytest.raises(ValueError):
            logistic_from_endpoints(250.0, 0.5, 250.0, 0.9)


class TestDependentEfficacy:
    def test_mixes_conditionals_with_q_weight(self):
        cond = CondEfficacyParams(
            given_no_tox=EfficacyParams(*logistic_from_endpoints(250.0, 0.4, 425.0, 0.8)),
            given_tox=EfficacyParams(*logistic_from_endpoints(250.0, 0.7, 425.0, 0.9)),
        )
        got = eff_prob_at_mtd_dependent(250.0, Q, cond)
        assert got == pytest.approx((1.0 - Q) * 0.4 + Q * 0.7, abs=1e-12)


def cross_ratio(cells):
    return (cells.p00 * cells.p11) / (cells.p10 * cells.p01)


class TestDaleCells:
    def test_worked_cell(self):
        # pi = phi = 0.5, rho = 9: a = 9, disc = 81 - 72 = 9, p11 = 4.5 / 12.
        cells = dale_cells(0.5, 0.5, 9.0)
        assert cells.p11 == pytest.approx(0.375, abs=1e-12)
        assert cells.p00 == pytest.approx(0.375, abs=1e-12)
        assert cells.p01 == pytest.approx(0.125, abs=1e-12)
        assert cross_ratio(cells) == pytest.approx(9.0, rel=1e-12)

    def test_independence_at_unit_ratio(self):
        cells = dale_cells(0.3, 0.2, 1.0)
        assert cells.p11 == pytest.approx(0.06, abs=1e-12)

    def test_continuity_through_unit_ratio(self):
        for rho in (1.0 - 1e-9, 1.0 + 1e-9):
            cells = dale_cells(0.3, 0.2, rho)
            assert cells.p11 == pytest.approx(0.06, abs=1e-7)

    def test_frechet_limits(self):
        # rho -> inf pushes p11 to min(pi, phi); rho -> 0 to max(0, pi+phi-1).
        hi = dale_cells(0.6, 0.4, 1e10)
        assert hi.p11 == pytest.approx(0.4, abs=1e-6)
        lo = dale_cells(0.9, 0.8, 1e-10)
        assert lo.p11 == pytest.approx(0.7, abs=1e-6)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            dale_cells(1.2, 0.5, 2.0)
        with pytest.raises(ValueError):
            dale_cells(0.5, -0.1, 2.0)
        with pytest.raises(ValueError):
            dale_cells(0.5, 0.5, 0.0)
        with pytest.raises(ValueError):
            dale_cells(0.5, 0.5, -3.0)

    def test_helpers(self):
        cells = dale_cells(0.3, 0.2, 2.5)
        assert cells.as_array().tolist() == [cells.p00, cells.p01, cells.p10, cells.p11]
        assert cells.tox_marginal == pytest.approx(0.2, abs=1e-12)
        assert cells.eff_marginal == pytest.approx(0.3, abs=1e-12)

    @given(
        st.floats(min_value=0.01, max_value=0.99),
        st.floats(min_value=0.01, max_value=0.99),
        st.floats(min_value=0.01, max_value=100.0),
    )
    def test_marginals_round_trip(self, pi, phi, rho):
        cells = dale_cells(pi, phi, rho)
        arr = cells.as_array()
        assert np.all(arr >= 0.0)
        assert arr.sum() == pytest.approx(1.0, abs=1e-10)
        assert cells.eff_marginal == pytest.approx(pi, abs=1e-10)
        assert cells.tox_marginal == pytest.approx(phi, abs=1e-10)
        if np.all(arr > 1e-8):
            assert cross_ratio(cells) == pytest.approx(rho, rel=1e-6)

    @given(
        st.floats(min_value=0.05, max_value=0.95),
        st.floats(min_value=0.05, max_value=0.95),
    )
    def test_positive_association_raises_joint_cell(self, pi, phi):
        indep = dale_cells(pi, phi, 1.0)
        pos = dale_cells(pi, phi, 4.0)
        assert pos.p11 > indep.p11 - 1e-12


def test_infeasible_error_is_value_error():
    assert issubclass(InfeasibleJointError, ValueError)
    with pytest.raises(ValueError):
        raise InfeasibleJointError("x")
