"""Discretized optimal control problem for the automation's gain modulation.

Per prediction stage j the decision block is six numbers

    [gamma_ba, gamma_ka, s1, s2, mu1, mu2]

stacked into a flat vector U of length 6*Np: the two gain-modulation commands,
two slack variables converting the gain non-negativity constraints into the
equalities s1^2 - b_a = 0 and s2^2 - k_a = 0, and their multipliers.  States
are eliminated by a forward Euler rollout from the measured state; costates
come from a backward recursion with zero terminal condition; the stationarity
residual F stacks, per stage, the control gradient, the slack gradient and the
two constraint values.  A zero of F is a stationary point of the discrete
Lagrangian.

The stage cost is

    ts * [ w_human*(theta_h - theta_s)^2 + w_auto*(theta_a - theta_s)^2
           + w_disagree*tau_t^2 ]
    + ts * [ r_u*|u|^2 - r_s*(s1 + s2) ]

The bracketed second line is a well-posedness augmentation: without r_u the
control gradient of the last stage is identically zero (nothing after it ever
enters the cost), and without r_s the slack/multiplier pair sits on the
singular manifold s = mu = 0 whenever a gain reaches zero.  Both terms vanish
for r_u = r_s = 0, recovering the plain tracking cost.

Two prediction discretizations are available.  ``euler`` is the plain
forward-Euler recursion, bit-identical to the plant's euler step.  It is kept
for equation-fidelity tests but is useless inside the loop: the torque-sensor
spring gives the plant a ~430 rad/s torsional mode, which forward Euler at the
10 ms sample amplifies ~4.4x per stage, i.e. ~10^6 over a 10-stage horizon,
drowning the cost in a fictitious instability (and making the stationarity
system unsolvable in practice).  The default ``semi_implicit`` treats the four
mechanical states with backward Euler (they are linear given the gains, so one
4x4 solve per stage) while the gain states stay explicit; it is first-order
accurate like plain Euler but unconditionally stable on the fast mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .agents import AUTOPILOT_WEIGHTS, CostWeights
from .plant import B_A, K_A, MechanicalParams, derivative_array

STAGE_WIDTH = 6


class DimensionMismatch(ValueError):
    """Sequence lengths disagree with the configured horizon."""


class EmptyHorizon(ValueError):
    """A decision vector with no stages has no first control to extract."""


class StageDecision(NamedTuple):
    """One stage's unknowns: controls, slacks, constraint multipliers."""

    gamma_ba: float = 0.0
    gamma_ka: float = 0.0
    s1: float = 0.0
    s2: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0


PREDICTOR_EULER = "euler"
PREDICTOR_SEMI_IMPLICIT = "semi_implicit"


@dataclass(frozen=True)
class OcpSettings:
    """Horizon, step, cost weights and regularization of the modulation OCP."""

    np_horizon: int = 10
    nc_horizon: int = 10
    ts: float = 0.01
    weights: CostWeights = field(default_factory=lambda: AUTOPILOT_WEIGHTS)
    r_u: float = 1e-3
    r_s: float = 1e-2
    predictor: str = PREDICTOR_SEMI_IMPLICIT

    def __post_init__(self):
        if self.nc_horizon < 1 or self.np_horizon < self.nc_horizon:
            raise ValueError("need np_horizon >= nc_horizon >= 1")
        if self.ts <= 0.0:
            raise ValueError("ts must be > 0")
        if self.r_u < 0.0 or self.r_s < 0.0:
            raise ValueError("r_u and r_s must be >= 0")
        if self.predictor not in (PREDICTOR_EULER, PREDICTOR_SEMI_IMPLICIT):
            raise ValueError(f"unknown predictor {self.predictor!r}")

    @property
    def dim(self) -> int:
        return STAGE_WIDTH * self.np_horizon


def extract_control(U):
    """First stage's control pair: what the loop actually applies."""
    vec = np.asarray(U, dtype=float).ravel()
    if vec.size < 2:
        raise EmptyHorizon("decision vector has no control block")
    from .plant import ControlInput

    return ControlInput(float(vec[0]), float(vec[1]))


def stack_decisions(stages: Sequence[StageDecision]) -> np.ndarray:
    """Flatten per-stage decisions into the solver's vector layout."""
    if not stages:
        raise EmptyHorizon("need at least one stage")
    return np.asarray([v for st in stages for v in st], dtype=float)


def split_decisions(U) -> list[StageDecision]:
    """Inverse of ``stack_decisions``."""
    vec = np.asarray(U, dtype=float).ravel()
    if vec.size == 0 or vec.size % STAGE_WIDTH:
        raise DimensionMismatch("decision vector length must be a multiple of 6")
    return [StageDecision(*map(float, vec[i:i + STAGE_WIDTH]))
            for i in range(0, vec.size, STAGE_WIDTH)]


class ImpedanceOcp:
    """The gain-modulation OCP for one plant parameterization and weight set."""

    def __init__(self, params: MechanicalParams, settings: OcpSettings):
        self.params = params
        self.settings = settings

    @property
    def dim(self) -> int:
        return self.settings.dim

    def stage_cost(self, x, w, d) -> float:
        """Cost of one stage; `d` is a StageDecision or any 6-sequence."""
        st = self.settings
        wt = st.weights
        e_h = float(w[2]) - float(x[2])
        e_a = float(w[4]) - float(x[2])
        tau_t = self.params.k_t * (float(x[0]) - float(x[2]))
        track = wt.w_human * e_h * e_h + wt.w_auto * e_a * e_a + wt.w_disagree * tau_t * tau_t
        reg = st.r_u * (float(d[0]) ** 2 + float(d[1]) ** 2) - st.r_s * (float(d[2]) + float(d[3]))
        return st.ts * (track + reg)

    def _check_shapes(self, w_seq, U) -> np.ndarray:
        n = self.settings.np_horizon
        if len(w_seq) < n:
            raise DimensionMismatch(f"w_seq needs >= {n} entries, got {len(w_seq)}")
        vec = np.asarray(U, dtype=float).ravel()
        if vec.size != STAGE_WIDTH * n:
            raise DimensionMismatch(f"decision vector length {vec.size}, expected {STAGE_WIDTH * n}")
        return vec

    def rollout(self, x0, w_seq, U) -> np.ndarray:
        """Forward Euler state sequence, shape (Np+1, 8).

        Same arithmetic as the plant's euler step, but without the gain clamp:
        the predictor must stay smooth for the adjoint recursion.
        """
        st = self.settings
        n = st.np_horizon
        vec = self._check_shapes(w_seq, U)
        xs = np.empty((n + 1, 8))
        xs[0] = np.asarray(x0, dtype=float)
        x = xs[0]
        for j in range(n):
            base = STAGE_WIDTH * j
            dx = derivative_array(x, w_seq[j], float(vec[base]), float(vec[base + 1]), self.params)
            x = x + st.ts * dx
            xs[j + 1] = x
        return xs

    def _mech_system(self, x, w):
        """Backward-Euler system for the mechanical states with frozen gains.

        Returns (M, rhs) with M = I - ts*A(gains) so that M @ m_next = rhs;
        the mechanical block is linear in [theta_sw, omega_sw, theta_s,
        omega_s] once the four gains are held at their stage value.
        """
        p = self.params
        ts = self.settings.ts
        j1 = p.inertia_wheel
        j2 = p.inertia_column
        r = p.ratio
        kt = p.k_t
        b_h = float(x[4]); k_h = float(x[5]); b_a = float(x[6]); k_a = float(x[7])
        M = np.array([
            [1.0, -ts, 0.0, 0.0],
            [ts * (k_h + kt) / j1, 1.0 + ts * b_h / j1, -ts * kt / j1, 0.0],
            [0.0, 0.0, 1.0, -ts],
            [-ts * kt / j2, 0.0, ts * (r * r * k_a + kt) / j2, 1.0 + ts * r * r * b_a / j2],
        ])
        rhs = np.array([
            float(x[0]),
            float(x[1]) + ts * (b_h * float(w[3]) + k_h * float(w[2])) / j1,
            float(x[2]),
            float(x[3]) + ts * (r * b_a * float(w[5]) + r * k_a * float(w[4]) + float(w[6])) / j2,
        ])
        return M, rhs

    def _mech_coeffs(self, x, w):
        """Stage scalars of the backward-Euler mechanical system.

        With the two kinematic rows eliminated (theta_next = theta + ts*omega_next)
        the system reduces to a 2x2 in the two rates; returns the entries of
        that reduced system plus the kinematic right-hand sides.
        """
        p = self.params
        ts = self.settings.ts
        j1 = p.inertia_wheel
        j2 = p.inertia_column
        r = p.ratio
        kt = p.k_t
        b_h = float(x[4]); k_h = float(x[5]); b_a = float(x[6]); k_a = float(x[7])
        a21 = ts * (k_h + kt) / j1
        a23 = ts * kt / j1
        d1 = 1.0 + ts * b_h / j1
        b41 = ts * kt / j2
        b43 = ts * (r * r * k_a + kt) / j2
        d3 = 1.0 + ts * r * r * b_a / j2
        r0 = float(x[0])
        r1 = float(x[1]) + ts * (b_h * float(w[3]) + k_h * float(w[2])) / j1
        r2 = float(x[2])
        r3 = float(x[3]) + ts * (r * b_a * float(w[5]) + r * k_a * float(w[4]) + float(w[6])) / j2
        return a21, a23, d1, b41, b43, d3, r0, r1, r2, r3

    def predict_states(self, x0, w_seq, U) -> np.ndarray:
        """Predicted state sequence under the configured discretization."""
        if self.settings.predictor == PREDICTOR_EULER:
            return self.rollout(x0, w_seq, U)
        st = self.settings
        p = self.params
        n = st.np_horizon
        ts = st.ts
        vec = self._check_shapes(w_seq, U)
        xs = np.empty((n + 1, 8))
        xs[0] = np.asarray(x0, dtype=float)
        x = xs[0]
        for j in range(n):
            base = STAGE_WIDTH * j
            wj = w_seq[j]
            a21, a23, d1, b41, b43, d3, r0, r1, r2, r3 = self._mech_coeffs(x, wj)
            # reduced 2x2 in (omega_sw_next, omega_s_next)
            e11 = d1 + ts * a21
            e13 = -ts * a23
            e31 = -ts * b41
            e33 = d3 + ts * b43
            q1 = r1 - a21 * r0 + a23 * r2
            q3 = r3 + b41 * r0 - b43 * r2
            det = e11 * e33 - e13 * e31
            om_sw = (q1 * e33 - e13 * q3) / det
            om_s = (e11 * q3 - e31 * q1) / det
            nxt = np.empty(8)
            nxt[0] = r0 + ts * om_sw
            nxt[1] = om_sw
            nxt[2] = r2 + ts * om_s
            nxt[3] = om_s
            nxt[4] = x[4] + ts * (p.alpha_bh * float(x[4]) + p.beta_bh * float(wj[0]))
            nxt[5] = x[5] + ts * (p.alpha_kh * float(x[5]) + p.beta_kh * float(wj[1]))
            nxt[6] = x[6] + ts * (p.alpha_ba * float(x[6]) + p.beta_ba * float(vec[base]))
            nxt[7] = x[7] + ts * (p.alpha_ka * float(x[7]) + p.beta_ka * float(vec[base + 1]))
            x = nxt
            xs[j + 1] = x
        return xs

    def costates(self, x_seq, w_seq, U) -> np.ndarray:
        """Backward adjoint recursion, shape (Np+1, 8), zero terminal row.

        Each step applies the transposed Jacobian of the configured state
        update, adds the stage-cost gradient, and injects the constraint
        multipliers into the two automation-gain rows.
        """
        st = self.settings
        n = st.np_horizon
        xs = np.asarray(x_seq, dtype=float)
        if xs.shape[0] != n + 1:
            raise DimensionMismatch(f"x_seq has {xs.shape[0]} rows, expected {n + 1}")
        vec = self._check_shapes(w_seq, U)
        if st.predictor == PREDICTOR_EULER:
            return self._costates_euler(xs, w_seq, vec)
        return self._costates_semi_implicit(xs, w_seq, vec)

    def _cost_gradient_rows(self, xj, wj):
        """Stage-cost gradient entries for the two angle coordinates (times ts)."""
        st = self.settings
        wt = st.weights
        kt = self.params.k_t
        twist = float(xj[0]) - float(xj[2])
        g_sw = st.ts * 2.0 * wt.w_disagree * kt * kt * twist
        g_s = st.ts * (-2.0 * wt.w_human * (float(wj[2]) - float(xj[2]))
                       - 2.0 * wt.w_auto * (float(wj[4]) - float(xj[2]))
                       - 2.0 * wt.w_disagree * kt * kt * twist)
        return g_sw, g_s

    def _costates_euler(self, xs, w_seq, vec) -> np.ndarray:
        st = self.settings
        p = self.params
        n = st.np_horizon
        ts = st.ts
        kt = p.k_t
        r = p.ratio
        j1 = p.inertia_wheel
        j2 = p.inertia_column
        lam = np.zeros((n + 1, 8))
        for j in range(n - 1, -1, -1):
            xj = xs[j]
            wj = w_seq[j]
            ln = lam[j + 1]
            l0 = float(ln[0]); l1 = float(ln[1]); l2 = float(ln[2]); l3 = float(ln[3])
            l4 = float(ln[4]); l5 = float(ln[5]); l6 = float(ln[6]); l7 = float(ln[7])
            th_sw = float(xj[0]); om_sw = float(xj[1]); th_s = float(xj[2]); om_s = float(xj[3])
            b_h = float(xj[4]); k_h = float(xj[5]); b_a = float(xj[6]); k_a = float(xj[7])
            th_h = float(wj[2]); dth_h = float(wj[3]); th_a = float(wj[4]); dth_a = float(wj[5])
            base = STAGE_WIDTH * j
            mu1 = float(vec[base + 4]); mu2 = float(vec[base + 5])
            g_sw, g_s = self._cost_gradient_rows(xj, wj)

            lam[j, 0] = g_sw + l0 + ts * (-(k_h + kt) / j1 * l1 + kt / j2 * l3)
            lam[j, 1] = l1 + ts * (l0 - b_h / j1 * l1)
            lam[j, 2] = g_s + l2 + ts * (kt / j1 * l1 - (r * r * k_a + kt) / j2 * l3)
            lam[j, 3] = l3 + ts * (l2 - r * r * b_a / j2 * l3)
            lam[j, 4] = l4 + ts * ((dth_h - om_sw) / j1 * l1 + p.alpha_bh * l4)
            lam[j, 5] = l5 + ts * ((th_h - th_sw) / j1 * l1 + p.alpha_kh * l5)
            lam[j, 6] = l6 + ts * (r * (dth_a - r * om_s) / j2 * l3 + p.alpha_ba * l6) - mu1
            lam[j, 7] = l7 + ts * (r * (th_a - r * th_s) / j2 * l3 + p.alpha_ka * l7) - mu2
        return lam

    def _costates_semi_implicit(self, xs, w_seq, vec) -> np.ndarray:
        """Adjoint of the backward-Euler/explicit split update.

        The mechanical sensitivity is the transpose solve with the same 4x4
        system; the gain rows pick up the gain dependence of that system
        through the dynamics evaluated at the *new* mechanical state (implicit
        function rule).
        """
        st = self.settings
        p = self.params
        n = st.np_horizon
        ts = st.ts
        r = p.ratio
        j1 = p.inertia_wheel
        j2 = p.inertia_column
        lam = np.zeros((n + 1, 8))
        for j in range(n - 1, -1, -1):
            xj = xs[j]
            xn = xs[j + 1]
            wj = w_seq[j]
            ln = lam[j + 1]
            base = STAGE_WIDTH * j
            mu1 = float(vec[base + 4]); mu2 = float(vec[base + 5])
            g_sw, g_s = self._cost_gradient_rows(xj, wj)

            # transpose solve of the same reduced 2x2 (kinematic rows eliminated)
            a21, a23, d1, b41, b43, d3, _, _, _, _ = self._mech_coeffs(xj, wj)
            l0 = float(ln[0]); l1 = float(ln[1]); l2 = float(ln[2]); l3 = float(ln[3])
            e11 = d1 + ts * a21
            e33 = d3 + ts * b43
            q1 = ts * l0 + l1
            q3 = ts * l2 + l3
            det = e11 * e33 - (ts * a23) * (ts * b41)
            y1 = (q1 * e33 + ts * b41 * q3) / det
            y3 = (e11 * q3 + ts * a23 * q1) / det
            y0 = (d1 * y1 - l1) / ts
            y2 = (d3 * y3 - l3) / ts

            lam[j, 0] = g_sw + y0
            lam[j, 1] = y1
            lam[j, 2] = g_s + y2
            lam[j, 3] = y3
            lam[j, 4] = float(ln[4]) * (1.0 + ts * p.alpha_bh) \
                + ts * (float(wj[3]) - float(xn[1])) / j1 * y1
            lam[j, 5] = float(ln[5]) * (1.0 + ts * p.alpha_kh) \
                + ts * (float(wj[2]) - float(xn[0])) / j1 * y1
            lam[j, 6] = float(ln[6]) * (1.0 + ts * p.alpha_ba) \
                + ts * r * (float(wj[5]) - r * float(xn[3])) / j2 * y3 - mu1
            lam[j, 7] = float(ln[7]) * (1.0 + ts * p.alpha_ka) \
                + ts * r * (float(wj[4]) - r * float(xn[2])) / j2 * y3 - mu2
        return lam

    def kkt_residual(self, U, x0, w_seq) -> np.ndarray:
        """Stationarity residual F(U; x0, w) of length 6*Np.

        Per stage: [dH/du (2), dH/ds (2), constraints (2)].  When the control
        horizon is shorter than the prediction horizon, the control rows of
        the frozen stages become tying residuals u_j - u_{Nc-1} and stage
        Nc-1's control rows accumulate the gradient contributions of all the
        stages its control covers, so a zero of F is a stationary point of
        the move-blocked problem.
        """
        st = self.settings
        p = self.params
        n = st.np_horizon
        nc = st.nc_horizon
        vec = np.asarray(U, dtype=float).ravel()
        xs = self.predict_states(x0, w_seq, vec)
        lam = self.costates(xs, w_seq, vec)

        ts = st.ts
        two_ru_ts = 2.0 * ts * st.r_u
        rs_ts = ts * st.r_s
        out = np.empty(STAGE_WIDTH * n)
        for j in range(n):
            base = STAGE_WIDTH * j
            u0 = float(vec[base]); u1 = float(vec[base + 1])
            s1 = float(vec[base + 2]); s2 = float(vec[base + 3])
            mu1 = float(vec[base + 4]); mu2 = float(vec[base + 5])
            out[base] = ts * p.beta_ba * float(lam[j + 1, 6]) + two_ru_ts * u0
            out[base + 1] = ts * p.beta_ka * float(lam[j + 1, 7]) + two_ru_ts * u1
            out[base + 2] = 2.0 * mu1 * s1 - rs_ts
            out[base + 3] = 2.0 * mu2 * s2 - rs_ts
            out[base + 4] = s1 * s1 - float(xs[j, B_A])
            out[base + 5] = s2 * s2 - float(xs[j, K_A])

        if nc < n:
            last = STAGE_WIDTH * (nc - 1)
            acc0 = two_ru_ts * (n - nc + 1) * float(vec[last])
            acc1 = two_ru_ts * (n - nc + 1) * float(vec[last + 1])
            for i in range(nc - 1, n):
                acc0 += ts * p.beta_ba * float(lam[i + 1, 6])
                acc1 += ts * p.beta_ka * float(lam[i + 1, 7])
            out[last] = acc0
            out[last + 1] = acc1
            for j in range(nc, n):
                base = STAGE_WIDTH * j
                out[base] = float(vec[base]) - float(vec[last])
                out[base + 1] = float(vec[base + 1]) - float(vec[last + 1])
        return out

    def seed_decision(self, x0, w_now) -> np.ndarray:
        """Analytic initial guess: zero controls, feasible slacks, centered multipliers.

        Slacks square to the gains of the zero-control rollout; multipliers
        satisfy the slack stationarity 2*mu*s = ts*r_s (zero where a slack is
        exactly zero).
        """
        st = self.settings
        n = st.np_horizon
        vec = np.zeros(STAGE_WIDTH * n)
        xs = self.predict_states(x0, [w_now] * n, vec)
        for j in range(n):
            base = STAGE_WIDTH * j
            for k, idx in ((2, B_A), (3, K_A)):
                s = float(np.sqrt(max(xs[j, idx], 0.0)))
                vec[base + k] = s
                vec[base + k + 2] = st.ts * st.r_s / (2.0 * s) if s > 0.0 else 0.0
        return vec

    def kkt_function(self, w_now) -> Callable[[np.ndarray, np.ndarray, float], np.ndarray]:
        """Residual closure F(x, U, t) holding the current exogenous input.

        The exogenous signals are zero-order held over the horizon, so the
        returned closure has no explicit time dependence; `t` is part of the
        signature for solvers that probe it.
        """
        w_row = np.asarray(w_now, dtype=float)
        w_seq = [w_row] * self.settings.np_horizon

        def f_eval(x, U, t: float) -> np.ndarray:
            return self.kkt_residual(U, x, w_seq)

        return f_eval
