import math

import numpy as np
import pytest

from hapticsteer import agents
from hapticsteer.agents import (ACTIVE_SAFETY, AUTOPILOT, COOPERATIVE,
                                UNCOOPERATIVE, CostWeights, IntentProfile,
                                InteractionMode, ZeroActivation, automation_intent,
                                human_gamma_hold, intent, select_mode, weights_for)
from hapticsteer.plant import MechanicalParams

PROFILE = IntentProfile()


class TestIntent:
    def test_zero_before_maneuver(self):
        assert intent(0.5, PROFILE) == (0.0, 0.0)

    def test_plateau_start(self):
        angle, rate = intent(6.0, PROFILE)
        assert angle == pytest.approx(1.0)
        assert rate == pytest.approx(0.0, abs=1e-15)

    def test_rise_midpoint(self):
        angle, rate = intent(3.5, PROFILE)
        assert angle == pytest.approx(0.5)
        assert rate == pytest.approx(0.1 * math.pi)

    def test_zero_after_maneuver(self):
        assert intent(14.0, PROFILE) == (0.0, 0.0)
        assert intent(50.0, PROFILE) == (0.0, 0.0)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            intent(-0.1, PROFILE)

    def test_continuous_everywhere(self):
        ts = np.linspace(0.0, 15.0, 3001)
        angles = np.array([intent(t, PROFILE)[0] for t in ts])
        assert np.max(np.abs(np.diff(angles))) < 2e-3  # bounded slope, no jumps

    def test_rate_matches_central_difference(self):
        h = 1e-4
        breakpoints = {1.0, 6.0, 8.0, 13.0}
        for t in np.linspace(0.05, 14.5, 290):
            if min(abs(t - b) for b in breakpoints) < 2 * h:
                continue
            fd = (intent(t + h, PROFILE)[0] - intent(t - h, PROFILE)[0]) / (2 * h)
            assert intent(t, PROFILE)[1] == pytest.approx(fd, abs=1e-6)

    def test_zero_slope_at_segment_joints(self):
        for t in (1.0, 6.0, 8.0, 13.0):
            assert intent(t, PROFILE)[1] == pytest.approx(0.0, abs=1e-12)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            IntentProfile(t2=0.0)
        with pytest.raises(ValueError):
            IntentProfile(t1=-1.0)


class TestAutomationIntent:
    def test_cooperative_scaling(self):
        assert automation_intent(1.0, 0.0, COOPERATIVE) == (0.9, 0.0)

    def test_uncooperative_sign_flip(self):
        assert automation_intent(1.0, 0.0, UNCOOPERATIVE) == (-0.9, -0.0)

    def test_zero_intent(self):
        assert automation_intent(0.0, 0.0, COOPERATIVE)[0] == 0.0
        assert automation_intent(0.0, 0.0, UNCOOPERATIVE)[0] == 0.0

    def test_magnitude_ratio_along_curve(self):
        for t in np.linspace(0.0, 14.0, 57):
            th, dth = intent(t, PROFILE)
            ta, _ = automation_intent(th, dth, UNCOOPERATIVE)
            assert abs(ta) == pytest.approx(0.9 * abs(th))

    def test_custom_scale(self):
        assert automation_intent(1.0, 2.0, COOPERATIVE, scale=0.0) == (0.0, 0.0)

    def test_unknown_cooperation(self):
        with pytest.raises(ValueError):
            automation_intent(1.0, 0.0, "frenemy")


class TestHumanGammaHold:
    def test_unit_coefficients(self):
        assert human_gamma_hold((0.5, 1.0), MechanicalParams()) == (0.5, 1.0)

    def test_zero_target(self):
        assert human_gamma_hold((0.0, 0.0), MechanicalParams()) == (0.0, 0.0)

    def test_general_coefficients(self):
        p = MechanicalParams(alpha_bh=-2.0, alpha_kh=-2.0, beta_bh=0.5, beta_kh=0.5)
        gb, gk = human_gamma_hold((0.1, 0.1), p)
        assert (gb, gk) == (pytest.approx(0.4), pytest.approx(0.4))

    def test_zero_activation_rejected(self):
        p = MechanicalParams(beta_kh=0.0)
        with pytest.raises(ZeroActivation):
            human_gamma_hold((0.1, 0.1), p)


class TestSelectMode:
    def test_stiff_arm_cooperative(self):
        mode = select_mode((0.5, 1.0), 1.0, 0.9, 0.5)
        assert mode == InteractionMode(COOPERATIVE, AUTOPILOT)

    def test_weak_arm_uncooperative(self):
        mode = select_mode((0.1, 0.1), 1.0, -0.9, 0.5)
        assert mode == InteractionMode(UNCOOPERATIVE, ACTIVE_SAFETY)

    def test_zero_intents_tie_toward_cooperation(self):
        assert select_mode((0.1, 0.7), 0.0, 0.0).cooperation == COOPERATIVE

    def test_invariant_under_positive_scaling(self):
        base = select_mode((0.2, 0.3), 0.4, -0.36)
        scaled = select_mode((0.2, 0.3), 40.0, -36.0)
        assert base == scaled

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            select_mode((0.1, 0.1), 1.0, 0.9, k_threshold=0.0)


class TestWeights:
    def test_autopilot_values(self):
        w = weights_for(InteractionMode(UNCOOPERATIVE, AUTOPILOT))
        assert (w.w_human, w.w_auto, w.w_disagree) == (0.2, 0.0, 0.8)

    def test_active_safety_values(self):
        w = weights_for(InteractionMode(COOPERATIVE, ACTIVE_SAFETY))
        assert (w.w_human, w.w_auto, w.w_disagree) == (0.0, 0.8, 0.2)

    def test_normalization(self):
        for auth in (AUTOPILOT, ACTIVE_SAFETY):
            w = weights_for(InteractionMode(COOPERATIVE, auth))
            assert w.w_human + w.w_auto + w.w_disagree == pytest.approx(1.0)

    def test_pure_lookup(self):
        mode = InteractionMode(COOPERATIVE, AUTOPILOT)
        assert weights_for(mode) == weights_for(mode)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            CostWeights(-0.1, 0.5, 0.6)
