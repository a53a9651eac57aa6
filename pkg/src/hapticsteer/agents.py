"""Scripted higher-level behavior of the two agents.

The driver's intent is a smooth lane-change-like curve (rest, cosine rise,
plateau, cosine return, rest); the automation's intent is a scaled copy of it
whose sign encodes whether the agents agree on the avoidance direction.  The
human's gain-modulation inputs are chosen so the arm impedance holds a target
value, and the interaction mode (who should hold authority, and whether the
agents cooperate) maps to the weights of the modulation cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

from .plant import MechanicalParams


class ZeroActivation(ValueError):
    """A gain-channel activation coefficient is zero; no input can hold the gain."""


COOPERATIVE = "cooperative"
UNCOOPERATIVE = "uncooperative"
AUTOPILOT = "autopilot"
ACTIVE_SAFETY = "active_safety"

COOPERATIONS = (COOPERATIVE, UNCOOPERATIVE)
AUTHORITIES = (AUTOPILOT, ACTIVE_SAFETY)


class InteractionMode(NamedTuple):
    cooperation: str
    authority: str


@dataclass(frozen=True)
class IntentProfile:
    """Timing and amplitude of the driver's maneuver.

    The curve is 0 for t1 seconds, rises over t2 seconds to `w_amp`, holds for
    t3 seconds, returns over another t2 seconds, then stays 0.  Total span is
    t1 + 2*t2 + t3.
    """

    t1: float = 1.0
    t2: float = 5.0
    t3: float = 2.0
    w_amp: float = 1.0

    def __post_init__(self):
        if self.t1 < 0.0 or self.t3 < 0.0:
            raise ValueError("t1 and t3 must be >= 0")
        if self.t2 <= 0.0:
            raise ValueError("t2 must be > 0")
        if not math.isfinite(self.w_amp):
            raise ValueError("w_amp must be finite")

    @property
    def span(self) -> float:
        return self.t1 + 2.0 * self.t2 + self.t3


@dataclass(frozen=True)
class CostWeights:
    """Weights of the modulation cost's three squared residuals.

    All-zero weights are admitted (useful for exercising the stationarity
    machinery in isolation); the two mode weight sets both sum to one.
    """

    w_human: float      # on (theta_h - theta_s)^2
    w_auto: float       # on (theta_a - theta_s)^2
    w_disagree: float   # on tau_t^2

    def __post_init__(self):
        if min(self.w_human, self.w_auto, self.w_disagree) < 0.0:
            raise ValueError("weights must be >= 0")


AUTOPILOT_WEIGHTS = CostWeights(w_human=0.2, w_auto=0.0, w_disagree=0.8)
ACTIVE_SAFETY_WEIGHTS = CostWeights(w_human=0.0, w_auto=0.8, w_disagree=0.2)


def intent(t: float, profile: IntentProfile = IntentProfile()) -> Tuple[float, float]:
    """Driver intent angle and its analytic rate at time t >= 0.

    The cosine blends have zero slope at every segment joint, so the curve is
    C1 everywhere.
    """
    if t < 0.0:
        raise ValueError("t must be >= 0")
    t1, t2, t3, amp = profile.t1, profile.t2, profile.t3, profile.w_amp
    if t < t1 or t >= t1 + 2.0 * t2 + t3:
        return 0.0, 0.0
    if t < t1 + t2:
        phase = math.pi * (t - t1 - t2) / t2
        return 0.5 * amp * (1.0 + math.cos(phase)), -0.5 * amp * math.pi / t2 * math.sin(phase)
    if t < t1 + t2 + t3:
        return amp, 0.0
    phase = math.pi * (t - t1 - t2 - t3) / t2
    return 0.5 * amp * (1.0 + math.cos(phase)), -0.5 * amp * math.pi / t2 * math.sin(phase)


def automation_intent(theta_h: float, dtheta_h: float, cooperation: str,
                      scale: float = 0.9) -> Tuple[float, float]:
    """Automation intent: a scaled copy of the driver's, sign per cooperation.

    Cooperative means both agents steer the same way; uncooperative flips the
    sign so the intents oppose.  `scale` defaults to the benchmark value 0.9
    and may be set to 0 to model an automation with no motion goal.
    """
    if cooperation == COOPERATIVE:
        return scale * theta_h, scale * dtheta_h
    if cooperation == UNCOOPERATIVE:
        return -scale * theta_h, -scale * dtheta_h
    raise ValueError(f"unknown cooperation {cooperation!r}")


def human_gamma_hold(z_target: Tuple[float, float], p: MechanicalParams) -> Tuple[float, float]:
    """Gain inputs that make `z_target` a fixed point of the arm-gain dynamics.

    Solves alpha*z + beta*gamma = 0 per channel; with the default alpha=-1,
    beta=1 the input simply equals the target.
    """
    if p.beta_bh == 0.0 or p.beta_kh == 0.0:
        raise ZeroActivation("human activation coefficients must be nonzero")
    return (-p.alpha_bh * z_target[0] / p.beta_bh,
            -p.alpha_kh * z_target[1] / p.beta_kh)


def select_mode(z_h_est: Tuple[float, float], theta_h: float, theta_a: float,
                k_threshold: float = 0.5) -> InteractionMode:
    """Classify the interaction from estimated arm gains and the two intents.

    A stiff enough arm (estimated stiffness at or above the threshold) means
    the driver can steer safely, so the automation should yield (autopilot);
    otherwise it retains authority (active safety).  Intents sharing a sign
    count as cooperative; a zero product poses no conflict and ties toward
    cooperative.
    """
    if k_threshold <= 0.0:
        raise ValueError("k_threshold must be > 0")
    authority = AUTOPILOT if z_h_est[1] >= k_threshold else ACTIVE_SAFETY
    cooperation = COOPERATIVE if theta_h * theta_a >= 0.0 else UNCOOPERATIVE
    return InteractionMode(cooperation, authority)


def weights_for(mode: InteractionMode) -> CostWeights:
    """Cost weights for the given mode (authority axis decides them)."""
    if mode.authority == AUTOPILOT:
        return AUTOPILOT_WEIGHTS
    if mode.authority == ACTIVE_SAFETY:
        return ACTIVE_SAFETY_WEIGHTS
    raise ValueError(f"unknown authority {mode.authority!r}")
