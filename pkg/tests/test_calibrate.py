"""Threshold calibration: spend accounting, determinism, verification runs."""

import json
import math

import numpy as np
import pytest

from phase12.calibrate import (
    CalibrationSpec,
    DegenerateSpend,
    _conservative_threshold,
    bootstrap_reject_prob,
    calibrate_thresholds,
    implied_alternative,
)
from phase12.models import (
    EfficacyParams,
    ToxicityParams,
    eff_prob,
    logistic_from_endpoints,
    tox_prob,
)
from phase12.phase1 import Phase1Config, run_phase1
from phase12.seqtest import GroupSchedule

Q = 1.0 / 3.0
THETA = ToxicityParams(-4.1115, 0.0136734)
PSI = EfficacyParams(*logistic_from_endpoints(250.0, 0.5, 425.0, 0.9))
SCHED = GroupSchedule(m=8, group_sizes=(6, 6))


def truth_draw(x, rng):
    u_y = rng.random()
    u_z = rng.random()
    return int(u_y < tox_prob(x, THETA)), int(u_z < eff_prob(x, PSI))


def make_spec(**kw):
    base = dict(alpha=0.2, beta=0.3, p0=0.2, schedule=SCHED, q=Q,
                x_min=140.0, x_max=425.0, n_boot=300, seed=0,
                update_mtd=False, p1_override=0.5)
    base.update(kw)
    return CalibrationSpec(**base)


@pytest.fixture(scope="module")
def ph1():
    cfg = Phase1Config(design="ewoc", m=8, q=Q, x_min=140.0, x_max=425.0)
    return run_phase1(cfg, truth_draw, np.random.default_rng(7))


@pytest.fixture(scope="module")
def ph1_grid():
    grid = (140.0, 200.0, 250.0, 300.0, 350.0, 425.0)
    cfg = Phase1Config(design="uniform_grid", m=8, q=Q, x_min=140.0, x_max=425.0,
                       grid=grid)
    return run_phase1(cfg, truth_draw, np.random.default_rng(9))


@pytest.fixture(scope="module")
def calib(ph1):
    return calibrate_thresholds(make_spec(), ph1)


class TestConservativeThreshold:
    def test_evenly_spread(self):
        stats = np.arange(100) / 100.0
        t, achieved = _conservative_threshold(stats, 0.2)
        assert t == 0.80
        assert achieved == 0.20

    def test_ties_pick_the_qualifying_value(self):
        stats = np.array([0.0] * 50 + [1.0] * 50)
        t, achieved = _conservative_threshold(stats, 0.5)
        assert t == 1.0
        assert achieved == 0.5

    def test_masked_entries_cannot_be_picked(self):
        stats = np.array([-math.inf] * 90 + [5.0] * 10)
        t, achieved = _conservative_threshold(stats, 0.5)
        assert t == 5.0
        assert achieved == 0.1

    def test_all_masked_leaves_bound_unused(self):
        assert _conservative_threshold(np.full(100, -math.inf), 0.5) == (math.inf, 0.0)

    def test_no_value_qualifies_steps_past_the_max(self):
        t, achieved = _conservative_threshold(np.full(100, 1.0), 0.2)
        assert t == np.nextafter(1.0, np.inf)
        assert achieved == 0.0

    def test_tiny_spend_target_raises(self):
        with pytest.raises(DegenerateSpend):
            _conservative_threshold(np.arange(100.0), 0.05)


class TestSpecValidation:
    def test_rejects_bad_parameters(self):
        for kw in (dict(alpha=0.0), dict(beta=1.0), dict(epsilon=0.5),
                   dict(n_boot=99), dict(mode="bayes"), dict(p0=0.0),
                   dict(p1_override=0.1)):
            with pytest.raises(ValueError):
                make_spec(**kw)


class TestCalibration:
    def test_double_run_identical(self, ph1, calib):
        again = calibrate_thresholds(make_spec(), ph1)
        assert again.to_dict() == calib.to_dict()

    def test_worker_count_does_not_change_results(self, ph1, calib):
        parallel = calibrate_thresholds(make_spec(), ph1, workers=2)
        assert parallel.to_dict() == calib.to_dict()

    def test_spends_never_exceed_their_targets(self, calib):
        spec = make_spec()
        d = calib.diagnostics
        assert d["spend_futility"] <= spec.epsilon * spec.beta + 1e-12
        assert d["spend_early_efficacy"] <= spec.epsilon * spec.alpha + 1e-12
        assert d["spend_final"] <= (1 - spec.epsilon) * spec.alpha + 1e-12
        assert d["overall_alpha_spend"] <= spec.alpha + 1e-12

    def test_threshold_fields(self, calib):
        th = calib.thresholds
        assert th.p0 == 0.2 and th.p1 == 0.5
        assert calib.p1 == 0.5
        assert th.b_tilde >= 0.0 and th.c >= 0.0
        assert calib.c_alpha_fss > 0.0
        assert calib.plugin["kind"] == "parametric"

    def test_no_early_efficacy_moves_alpha_to_the_final_look(self, ph1, calib):
        res = calibrate_thresholds(make_spec(early_efficacy=False), ph1)
        assert math.isinf(res.thresholds.b)
        assert res.diagnostics["spend_early_efficacy"] == 0.0
        # the final look absorbs the whole budget, so its cut cannot be harder
        assert res.thresholds.c <= calib.thresholds.c + 1e-12

    def test_result_serializes_to_json(self, ph1):
        res = calibrate_thresholds(make_spec(early_efficacy=False), ph1)
        d = json.loads(json.dumps(res.to_dict()))
        assert d["thresholds"]["b"] == "inf"
        assert d["thresholds"]["c"] == res.thresholds.c

    def test_isotonic_mode(self, ph1_grid):
        res = calibrate_thresholds(make_spec(mode="isotonic"), ph1_grid)
        assert res.plugin["kind"] == "isotonic"
        assert res.plugin["levels"] == list(ph1_grid.used_levels)
        assert res.thresholds.c >= 0.0
        again = calibrate_thresholds(make_spec(mode="isotonic"), ph1_grid)
        assert again.to_dict() == res.to_dict()

    def test_degenerate_spend_raises(self, ph1):
        with pytest.raises(DegenerateSpend):
            calibrate_thresholds(make_spec(alpha=0.05, n_boot=100), ph1)


class TestImpliedAlternative:
    def test_lies_between_p0_and_one(self, ph1):
        p1, c_alpha = implied_alternative(make_spec(p1_override=None), ph1)
        assert 0.2 < p1 < 1.0
        assert c_alpha > 0.0

    def test_weaker_power_requirement_lowers_the_alternative(self, ph1):
        p1_strict, _ = implied_alternative(make_spec(p1_override=None, beta=0.2), ph1)
        p1_loose, _ = implied_alternative(make_spec(p1_override=None, beta=0.4), ph1)
        assert p1_loose <= p1_strict + 1e-12


class TestBootstrapVerify:
    def test_probability_and_se(self, ph1, calib):
        spec = make_spec()
        p, se = bootstrap_reject_prob(spec, ph1, calib.thresholds, at_p=spec.p0,
                                      n_boot=200)
        assert 0.0 <= p <= 1.0
        assert se == pytest.approx(math.sqrt(p * (1 - p) / 200), abs=1e-15)

    def test_power_dominates_size(self, ph1, calib):
        spec = make_spec()
        size, _ = bootstrap_reject_prob(spec, ph1, calib.thresholds, at_p=spec.p0,
                                        n_boot=200)
        power, _ = bootstrap_reject_prob(spec, ph1, calib.thresholds, at_p=calib.p1,
                                         side="lower", n_boot=200)
        assert power > size

    def test_seeded_repeat_is_identical(self, ph1, calib):
        spec = make_spec()
        a = bootstrap_reject_prob(spec, ph1, calib.thresholds, at_p=0.35, n_boot=150,
                                  seed=42)
        b = bootstrap_reject_prob(spec, ph1, calib.thresholds, at_p=0.35, n_boot=150,
                                  seed=42)
        assert a == b

    def test_worker_count_does_not_change_the_answer(self, ph1, calib):
        spec = make_spec()
        serial = bootstrap_reject_prob(spec, ph1, calib.thresholds, at_p=0.3,
                                       n_boot=200)
        parallel = bootstrap_reject_prob(spec, ph1, calib.thresholds, at_p=0.3,
                                         n_boot=200, workers=3)
        assert serial == parallel
