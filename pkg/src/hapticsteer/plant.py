"""Coupled driver / steering-column / motor plant.

The mechanical chain is: an intent cart (the driver's desired angle) pulling
the steering wheel through the arm's spring/damper, a torque-sensor spring
between wheel and column, and a motor geared to the column whose impedance
controller pulls toward the automation's desired angle.  On top of the four
mechanical states, the four impedance gains (human damping/stiffness,
automation damping/stiffness) evolve through first-order modulation dynamics,
so the full state is 8-dimensional:

    x = [theta_sw, omega_sw, theta_s, omega_s, b_h, k_h, b_a, k_a]

Exogenous signals (7-vector, see ``ExogenousInput``) carry the human's gain
modulation inputs, both intent angles with their analytic rates, and the road
torque.  The automation's gain modulation inputs are the control vector
u = [gamma_ba, gamma_ka].

All functions here are pure; angles are rad, torques N.m, time s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class NonPositiveInertia(ValueError):
    """A combined inertia (wheel+arm or column+reflected motor) is <= 0."""


class DegenerateStiffness(ValueError):
    """No unique static equilibrium: every path to ground has zero stiffness."""


# Array layout of the 8-dimensional state (matches PlantState field order).
THETA_SW, OMEGA_SW, THETA_S, OMEGA_S, B_H, K_H, B_A, K_A = range(8)

# Array layout of the exogenous 7-vector (matches ExogenousInput field order).
W_GAMMA_BH, W_GAMMA_KH, W_THETA_H, W_DTHETA_H, W_THETA_A, W_DTHETA_A, W_TAU_V = range(7)


class PlantState(NamedTuple):
    """Plant state; also the canonical layout for 8-vectors used throughout."""

    theta_sw: float = 0.0   # steering-wheel angle (rad)
    omega_sw: float = 0.0   # steering-wheel rate (rad/s)
    theta_s: float = 0.0    # steering-column angle (rad)
    omega_s: float = 0.0    # column rate (rad/s)
    b_h: float = 0.0        # human arm damping (N.m.s/rad)
    k_h: float = 0.0        # human arm stiffness (N.m/rad)
    b_a: float = 0.0        # automation damping gain (N.m.s/rad)
    k_a: float = 0.0        # automation stiffness gain (N.m/rad)

    @classmethod
    def from_array(cls, arr) -> "PlantState":
        return cls(*(float(v) for v in arr))


class ExogenousInput(NamedTuple):
    """Signals the plant does not control: human gain inputs, intents, road torque."""

    gamma_bh: float = 0.0
    gamma_kh: float = 0.0
    theta_h: float = 0.0
    dtheta_h: float = 0.0
    theta_a: float = 0.0
    dtheta_a: float = 0.0
    tau_v: float = 0.0


class ControlInput(NamedTuple):
    """Automation gain-modulation commands."""

    gamma_ba: float = 0.0
    gamma_ka: float = 0.0


class Measurement(NamedTuple):
    """Measured outputs: column angle, sensor torque, and the four gains."""

    theta_s: float
    tau_t: float
    k_h: float
    b_h: float
    k_a: float
    b_a: float


@dataclass(frozen=True)
class MechanicalParams:
    """Plant constants.  Defaults are the benchmark values used by all presets."""

    j_sw: float = 1e-2      # steering-wheel inertia (kg.m^2)
    j_s: float = 1e-2       # steering-column inertia (kg.m^2)
    j_m: float = 1e-3       # motor inertia (kg.m^2)
    j_h: float = 1e-3       # driver-arm inertia (kg.m^2)
    k_t: float = 1000.0     # torque-sensor stiffness (N.m/rad)
    ratio: float = 1.0      # belt mechanical advantage, column over motor
    alpha_bh: float = -1.0  # memory coefficients of the gain dynamics (1/s)
    alpha_kh: float = -1.0
    alpha_ba: float = -1.0
    alpha_ka: float = -1.0
    beta_bh: float = 1.0    # activation coefficients (dimensionless)
    beta_kh: float = 1.0
    beta_ba: float = 1.0
    beta_ka: float = 1.0

    def __post_init__(self):
        for name in ("j_sw", "j_s", "j_m", "j_h"):
            if getattr(self, name) <= 0.0:
                raise NonPositiveInertia(f"{name} must be > 0")
        if self.k_t <= 0.0:
            raise ValueError("k_t must be > 0")
        if self.ratio <= 0.0:
            raise ValueError("ratio must be > 0")
        for name in ("alpha_bh", "alpha_kh", "alpha_ba", "alpha_ka"):
            if getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be <= 0 for stable gain dynamics")

    @property
    def inertia_wheel(self) -> float:
        """Effective inertia on the wheel side (wheel plus arm)."""
        return self.j_sw + self.j_h

    @property
    def inertia_column(self) -> float:
        """Effective inertia on the column side (column plus reflected motor)."""
        return self.j_s + self.ratio * self.ratio * self.j_m


def derivative_array(x, w, gamma_ba: float, gamma_ka: float, p: MechanicalParams) -> np.ndarray:
    """State rate as an 8-vector; `x` and `w` are any indexables in canonical layout.

    This is the single source of truth for the plant dynamics; the typed
    wrapper ``state_derivative`` and every predictor/integrator build on it.
    """
    j1 = p.j_sw + p.j_h
    j2 = p.j_s + p.ratio * p.ratio * p.j_m
    if j1 <= 0.0 or j2 <= 0.0:
        raise NonPositiveInertia("combined inertia must be > 0")
    r = p.ratio
    th_sw = float(x[0]); om_sw = float(x[1]); th_s = float(x[2]); om_s = float(x[3])
    b_h = float(x[4]); k_h = float(x[5]); b_a = float(x[6]); k_a = float(x[7])
    tau_t = p.k_t * (th_sw - th_s)
    acc_sw = (b_h * (w[3] - om_sw) + k_h * (w[2] - th_sw) - tau_t) / j1
    acc_s = (r * b_a * (w[5] - r * om_s) + r * k_a * (w[4] - r * th_s) + tau_t + w[6]) / j2
    return np.array([
        om_sw,
        acc_sw,
        om_s,
        acc_s,
        p.alpha_bh * b_h + p.beta_bh * w[0],
        p.alpha_kh * k_h + p.beta_kh * w[1],
        p.alpha_ba * b_a + p.beta_ba * gamma_ba,
        p.alpha_ka * k_a + p.beta_ka * gamma_ka,
    ])


def state_derivative(x, w, u, p: MechanicalParams) -> PlantState:
    """Continuous-time rate of the full state (returned in PlantState layout)."""
    return PlantState.from_array(derivative_array(x, w, u[0], u[1], p))


def human_torque(x, w, acc_sw: float, p: MechanicalParams) -> float:
    """Torque the driver applies to the wheel.

    `acc_sw` is the wheel acceleration already computed by the dynamics; the
    inertial term is reported here without being double counted in the state
    equations, where the arm inertia folds into the effective wheel inertia.
    """
    return -p.j_h * acc_sw + x[4] * (w[3] - x[1]) + x[5] * (w[2] - x[0])


def automation_torque(x, w, p: MechanicalParams) -> float:
    """Torque the motor's impedance controller produces at the motor shaft."""
    r = p.ratio
    return x[6] * (w[5] - r * x[3]) + x[7] * (w[4] - r * x[2])


def sensor_torque(x, p: MechanicalParams) -> float:
    """Differential torque measured between wheel and column (the disagreement)."""
    return p.k_t * (x[0] - x[2])


def measure(x, p: MechanicalParams) -> Measurement:
    """Measured outputs for the given state."""
    return Measurement(
        theta_s=float(x[2]),
        tau_t=sensor_torque(x, p),
        k_h=float(x[5]),
        b_h=float(x[4]),
        k_a=float(x[7]),
        b_a=float(x[6]),
    )


def step(x, w, u, p: MechanicalParams, dt: float, method: str = "rk4") -> np.ndarray:
    """Advance the plant one step with `w`, `u` held, returning the new 8-vector.

    ``euler`` is the same arithmetic as the predictor model used by the
    controller; ``rk4`` is the classical 4-stage update and serves as the
    truth integrator.  After either update the four gains are clamped at 0:
    negative stiffness/damping is non-physical and can destabilize the
    simulation.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    gba = float(u[0])
    gka = float(u[1])
    x0 = np.asarray(x, dtype=float)
    if method == "euler":
        xn = x0 + dt * derivative_array(x0, w, gba, gka, p)
    elif method == "rk4":
        k1 = derivative_array(x0, w, gba, gka, p)
        k2 = derivative_array(x0 + 0.5 * dt * k1, w, gba, gka, p)
        k3 = derivative_array(x0 + 0.5 * dt * k2, w, gba, gka, p)
        k4 = derivative_array(x0 + dt * k3, w, gba, gka, p)
        xn = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    else:
        raise ValueError(f"unknown integration method {method!r}")
    np.maximum(xn[4:], 0.0, out=xn[4:])
    return xn


def equilibrium_angle(theta_h: float, theta_a: float, k_h: float, k_a: float,
                      k_t: float, ratio: float = 1.0) -> float:
    """Column angle of the static force balance under constant intents.

    With zero rates and accelerations, the wheel balance gives an effective
    human stiffness k_eq = k_h*k_t/(k_h + k_t) (arm spring in series with the
    torque sensor) pulling the column toward theta_h, while the motor path
    pulls toward theta_a with stiffness k_a reflected through the belt, so

        theta_s* = (k_eq*theta_h + ratio*k_a*theta_a) / (k_eq + ratio^2*k_a)

    which reduces to the convex combination (k_eq*theta_h + k_a*theta_a) /
    (k_eq + k_a) for a unit mechanical advantage.
    """
    if k_h < 0.0 or k_a < 0.0:
        raise ValueError("stiffness gains must be >= 0")
    if k_t <= 0.0:
        raise ValueError("k_t must be > 0")
    if ratio <= 0.0:
        raise ValueError("ratio must be > 0")
    k_eq = k_h * k_t / (k_h + k_t)
    denom = k_eq + ratio * ratio * k_a
    if denom <= 0.0:
        raise DegenerateStiffness("k_eq + ratio^2*k_a must be > 0 for a unique equilibrium")
    return (k_eq * theta_h + ratio * k_a * theta_a) / denom


def equilibrium_state(theta_h: float, theta_a: float, b_h: float, k_h: float,
                      b_a: float, k_a: float, p: MechanicalParams) -> np.ndarray:
    """Full resting state consistent with ``equilibrium_angle``.

    The wheel angle follows from the wheel's own balance between the arm
    spring and the torque sensor; rates are zero and gains are as given.
    """
    th_s = equilibrium_angle(theta_h, theta_a, k_h, k_a, p.k_t, p.ratio)
    if k_h + p.k_t <= 0.0:
        raise DegenerateStiffness("k_h + k_t must be > 0")
    th_sw = (k_h * theta_h + p.k_t * th_s) / (k_h + p.k_t)
    return np.array([th_sw, 0.0, th_s, 0.0, b_h, k_h, b_a, k_a])
