"""Closed-loop scenario execution, traces and metrics.

One tick of the loop: evaluate the driver's intent (restarting the maneuver at
each schedule segment), derive the automation's intent from the segment's
cooperation status, hold the human's arm gains at the segment target, pick the
cost weights from the interaction mode, run one tracking-solver step for the
automation's gain commands (adaptive runs only), record a trace row, then
advance the plant over one sample with the truth integrator.

The truth integrator is rk4 internally sub-stepped: the torque-sensor spring
gives the plant a ~430 rad/s torsional mode, far above what a single rk4
stage per 10 ms sample can integrate stably, so each sample is split into
`truth_substeps` equal rk4 steps with the control and exogenous inputs held.
Everything is deterministic: same config, same bytes out.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import agents, cgmres, plant
from .agents import (ACTIVE_SAFETY, AUTHORITIES, AUTOPILOT, COOPERATIONS,
                     CostWeights, IntentProfile, InteractionMode)
from .cgmres import SolverSettings, SolverState
from .ocp import ImpedanceOcp, OcpSettings
from .plant import MechanicalParams


class EmptyTrace(ValueError):
    """Metrics need at least one recorded row."""


class ValidationError(ValueError):
    """A configuration value violates an invariant."""


AUTHORITY_AUTO = "auto"

CSV_HEADER = ("t,theta_h,theta_a,theta_s,theta_sw,tau_h,tau_a,tau_t,"
              "b_h,k_h,b_a,k_a,gamma_ba,gamma_ka,mode,kkt_residual,gmres_iters")


@dataclass(frozen=True)
class ScheduleSegment:
    """One span of the scenario: arm-gain target and interaction mode."""

    t_start: float
    z_h_target: Tuple[float, float]
    cooperation: str
    authority: str  # "autopilot", "active_safety", or "auto" (classified online)

    def __post_init__(self):
        if self.cooperation not in COOPERATIONS:
            raise ValidationError(f"unknown cooperation {self.cooperation!r}")
        if self.authority not in AUTHORITIES + (AUTHORITY_AUTO,):
            raise ValidationError(f"unknown authority {self.authority!r}")
        if min(self.z_h_target) < 0.0:
            raise ValidationError("z_h_target gains must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a run needs; fully deterministic (no seeds anywhere)."""

    plant: MechanicalParams = field(default_factory=MechanicalParams)
    intent: IntentProfile = field(default_factory=IntentProfile)
    schedule: Tuple[ScheduleSegment, ...] = (
        ScheduleSegment(0.0, (0.5, 1.0), agents.COOPERATIVE, AUTOPILOT),)
    adaptive: bool = True
    z_a_fixed: Optional[Tuple[float, float]] = None  # baseline gains; default: first z_h_target
    duration: float = 15.0
    ts: float = 0.01
    ocp: OcpSettings = field(default_factory=OcpSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    truth_substeps: int = 10
    automation_intent_scale: float = 0.9
    tau_v: float = 0.0
    k_threshold: float = 0.5
    beta_autopilot: float = 0.1
    beta_active_safety: float = 1.0
    gamma_limit: float = 1000.0  # saturation of the applied gain commands
    # The solver's copy of the measurement never reports a gain below this
    # floor: at exactly zero gain (reachable, the plant clamps there) the
    # slack/multiplier stationarity has no finite solution and the tracked
    # iterate degenerates.  The plant state itself is never floored.
    gain_floor: float = 1e-3

    def __post_init__(self):
        if not self.schedule:
            raise ValidationError("schedule must be non-empty")
        if self.schedule[0].t_start != 0.0:
            raise ValidationError("first segment must start at t=0")
        starts = [s.t_start for s in self.schedule]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValidationError("segment start times must be strictly increasing")
        if self.duration <= 0.0:
            raise ValidationError("duration must be > 0")
        if self.ts <= 0.0:
            raise ValidationError("ts must be > 0")
        if self.truth_substeps < 1:
            raise ValidationError("truth_substeps must be >= 1")
        if self.ocp.ts != self.ts or self.solver.dt != self.ts:
            raise ValidationError("ocp.ts and solver.dt must equal the scenario ts")
        if self.z_a_fixed is not None and min(self.z_a_fixed) < 0.0:
            raise ValidationError("z_a_fixed gains must be >= 0")
        if self.gamma_limit <= 0.0:
            raise ValidationError("gamma_limit must be > 0")
        if self.gain_floor < 0.0:
            raise ValidationError("gain_floor must be >= 0")

    def baseline_gains(self) -> Tuple[float, float]:
        return self.z_a_fixed if self.z_a_fixed is not None else self.schedule[0].z_h_target


@dataclass
class SimulationTrace:
    """Column-wise record of one run on the uniform grid t_i = i*ts."""

    t: np.ndarray
    theta_h: np.ndarray
    theta_a: np.ndarray
    theta_s: np.ndarray
    theta_sw: np.ndarray
    tau_h: np.ndarray
    tau_a: np.ndarray
    tau_t: np.ndarray
    b_h: np.ndarray
    k_h: np.ndarray
    b_a: np.ndarray
    k_a: np.ndarray
    gamma_ba: np.ndarray
    gamma_ka: np.ndarray
    mode: list
    kkt_residual: np.ndarray
    gmres_iters: np.ndarray

    def __len__(self) -> int:
        return self.t.size

    def write_csv(self, stream) -> None:
        """Fixed header, 9 significant digits, one row per tick."""
        fields = ("t", "theta_h", "theta_a", "theta_s", "theta_sw", "tau_h", "tau_a",
                  "tau_t", "b_h", "k_h", "b_a", "k_a", "gamma_ba", "gamma_ka")
        cols = [getattr(self, name) for name in fields]
        stream.write(CSV_HEADER + "\n")
        for i in range(len(self)):
            nums = ",".join(f"{float(c[i]):.9g}" for c in cols)
            stream.write(f"{nums},{self.mode[i]},{self.kkt_residual[i]:.9g},"
                         f"{int(self.gmres_iters[i])}\n")

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass(frozen=True)
class RunMetrics:
    """Scalar summary of one run."""

    mean_abs_err: float       # mean |theta_h - theta_s|
    std_abs_err: float        # population std of the same
    disagreement_l1: float    # integral of |tau_t| dt (trapezoidal)
    rms_to_human: float       # RMS(theta_s - theta_h)
    rms_to_automation: float  # RMS(theta_s - theta_a)

    def to_dict(self) -> dict:
        return {
            "mean_abs_err": self.mean_abs_err,
            "std_abs_err": self.std_abs_err,
            "disagreement_l1": self.disagreement_l1,
            "rms_to_human": self.rms_to_human,
            "rms_to_automation": self.rms_to_automation,
        }


def mode_label(mode: InteractionMode) -> str:
    return f"{mode.cooperation}/{mode.authority}"


def _segment_index(schedule: Sequence[ScheduleSegment], t: float) -> int:
    idx = 0
    for i, seg in enumerate(schedule):
        if t >= seg.t_start:
            idx = i
    return idx


def run_scenario(cfg: ScenarioConfig,
                 tap: Optional[Callable[..., None]] = None) -> SimulationTrace:
    """Execute one scenario and return its trace.

    `tap`, when given, is called once per tick after the solver update with
    (i, t, x, w, mode, ocp, solver_state); it exists for probing internals
    (solver-oracle comparisons) and is never used by the CLI.  In adaptive
    runs `x` is the solver's view of the measurement (gain entries floored),
    i.e. exactly what the tracked decision vector refers to.
    """
    n = int(round(cfg.duration / cfg.ts))
    n_rows = n + 1

    # Per-authority plant parameterization: the activation coefficients of the
    # automation's gain channels differ between the two modes.
    params_for = {
        AUTOPILOT: replace(cfg.plant, beta_ba=cfg.beta_autopilot, beta_ka=cfg.beta_autopilot),
        ACTIVE_SAFETY: replace(cfg.plant, beta_ba=cfg.beta_active_safety,
                               beta_ka=cfg.beta_active_safety),
    }
    ocp_for = {auth: ImpedanceOcp(params_for[auth],
                                  replace(cfg.ocp, weights=agents.weights_for(
                                      InteractionMode(agents.COOPERATIVE, auth))))
               for auth in AUTHORITIES}
    # Baseline runs bypass the automation's gain dynamics entirely (gains held
    # constant), realized by zeroing those channels' memory coefficients.
    if not cfg.adaptive:
        params_for = {auth: replace(p, alpha_ba=0.0, alpha_ka=0.0, beta_ba=0.0, beta_ka=0.0)
                      for auth, p in params_for.items()}

    first = cfg.schedule[0]
    x = np.zeros(8)
    x[plant.B_H], x[plant.K_H] = first.z_h_target
    if cfg.adaptive:
        x[plant.B_A], x[plant.K_A] = first.z_h_target  # Z_A(0) = Z_H(0)
    else:
        x[plant.B_A], x[plant.K_A] = cfg.baseline_gains()

    cols = {name: np.zeros(n_rows) for name in
            ("t", "theta_h", "theta_a", "theta_s", "theta_sw", "tau_h", "tau_a", "tau_t",
             "b_h", "k_h", "b_a", "k_a", "gamma_ba", "gamma_ka", "kkt_residual")}
    iters = np.zeros(n_rows, dtype=int)
    modes: list[str] = []

    solver_state: Optional[SolverState] = None
    zero_u = (0.0, 0.0)
    sub_dt = cfg.ts / cfg.truth_substeps

    for i in range(n_rows):
        t = i * cfg.ts
        seg = cfg.schedule[_segment_index(cfg.schedule, t)]
        th_h, dth_h = agents.intent(t - seg.t_start, cfg.intent)
        th_a, dth_a = agents.automation_intent(th_h, dth_h, seg.cooperation,
                                               cfg.automation_intent_scale)
        if seg.authority == AUTHORITY_AUTO:
            authority = agents.select_mode((x[plant.B_H], x[plant.K_H]), th_h, th_a,
                                           cfg.k_threshold).authority
        else:
            authority = seg.authority
        mode = InteractionMode(seg.cooperation, authority)
        params = params_for[authority]
        gbh, gkh = agents.human_gamma_hold(seg.z_h_target, params)
        w = np.array([gbh, gkh, th_h, dth_h, th_a, dth_a, cfg.tau_v])

        if cfg.adaptive:
            ocp = ocp_for[authority]
            x_solver = x.copy()
            np.maximum(x_solver[4:8], cfg.gain_floor, out=x_solver[4:8])
            if solver_state is None:
                solver_state = cgmres.initialize(x_solver, w, t, cfg.solver, ocp)
            control, solver_state = cgmres.step(solver_state, x_solver, w,
                                                cfg.solver, ocp)
            # actuator-style saturation: the plant never sees commands the
            # gain hardware could not realize, whatever the solver is doing
            lim = cfg.gamma_limit
            u = (min(max(control.gamma_ba, -lim), lim),
                 min(max(control.gamma_ka, -lim), lim))
            cols["kkt_residual"][i] = solver_state.last_residual
            iters[i] = solver_state.last_iterations
        else:
            u = zero_u

        rate = plant.derivative_array(x, w, u[0], u[1], params)
        cols["t"][i] = t
        cols["theta_h"][i] = th_h
        cols["theta_a"][i] = th_a
        cols["theta_s"][i] = x[plant.THETA_S]
        cols["theta_sw"][i] = x[plant.THETA_SW]
        cols["tau_h"][i] = plant.human_torque(x, w, rate[plant.OMEGA_SW], params)
        cols["tau_a"][i] = plant.automation_torque(x, w, params)
        cols["tau_t"][i] = plant.sensor_torque(x, params)
        cols["b_h"][i] = x[plant.B_H]
        cols["k_h"][i] = x[plant.K_H]
        cols["b_a"][i] = x[plant.B_A]
        cols["k_a"][i] = x[plant.K_A]
        cols["gamma_ba"][i] = u[0]
        cols["gamma_ka"][i] = u[1]
        modes.append(mode_label(mode))

        if tap is not None:
            tap(i, t, x_solver.copy() if cfg.adaptive else x.copy(), w, mode,
                ocp_for[authority] if cfg.adaptive else None, solver_state)

        if i < n:
            for _ in range(cfg.truth_substeps):
                x = plant.step(x, w, u, params, sub_dt, method="rk4")

    return SimulationTrace(mode=modes, gmres_iters=iters, **cols)


def error_stats(trace: SimulationTrace) -> RunMetrics:
    """Tracking-error statistics and disagreement integral of one trace."""
    if len(trace) == 0:
        raise EmptyTrace("trace has no rows")
    err = np.abs(trace.theta_h - trace.theta_s)
    to_h = trace.theta_s - trace.theta_h
    to_a = trace.theta_s - trace.theta_a
    return RunMetrics(
        mean_abs_err=float(err.mean()),
        std_abs_err=float(err.std()),
        disagreement_l1=float(np.trapezoid(np.abs(trace.tau_t), trace.t)),
        rms_to_human=float(np.sqrt(np.mean(to_h * to_h))),
        rms_to_automation=float(np.sqrt(np.mean(to_a * to_a))),
    )


def compare(cfg: ScenarioConfig) -> Tuple[RunMetrics, RunMetrics]:
    """Metrics of the adaptive run and of the fixed-gain baseline (Z_A = Z_H)."""
    adaptive = run_scenario(replace(cfg, adaptive=True))
    baseline = run_scenario(replace(cfg, adaptive=False,
                                    z_a_fixed=cfg.schedule[0].z_h_target))
    return error_stats(adaptive), error_stats(baseline)


COMBINED_PATTERN = (
    (agents.COOPERATIVE, ACTIVE_SAFETY),
    (agents.UNCOOPERATIVE, AUTOPILOT),
    (agents.UNCOOPERATIVE, ACTIVE_SAFETY),
    (agents.COOPERATIVE, AUTOPILOT),
)


def combined_sequence(cfg: ScenarioConfig) -> SimulationTrace:
    """Run the four-mode sequence as one continuous trace.

    Solver and plant state carry across segment boundaries; only the weights,
    the activation coefficients and the human gain inputs switch.  The
    schedule must follow the canonical order with arm-gain targets alternating
    low, high, low, high.
    """
    if len(cfg.schedule) != 4:
        raise ValidationError("combined sequence needs exactly 4 segments")
    for seg, (coop, auth) in zip(cfg.schedule, COMBINED_PATTERN):
        if (seg.cooperation, seg.authority) != (coop, auth):
            raise ValidationError(
                f"segment at t={seg.t_start} must be {coop}/{auth}, "
                f"got {seg.cooperation}/{seg.authority}")
    k = [seg.z_h_target[1] for seg in cfg.schedule]
    if not (k[0] < k[1] and k[2] < k[3]):
        raise ValidationError("arm stiffness targets must alternate low, high, low, high")
    return run_scenario(cfg)
