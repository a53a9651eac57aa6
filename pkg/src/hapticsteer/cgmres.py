"""Matrix-free real-time solver for the stationarity system F(x, U, t) = 0.

Instead of re-solving the nonlinear system at every sample, the decision
vector is integrated along the continuation ODE

    F_U * dU/dt = -zeta*F - (dF from the moving state and clock)

whose right-hand side keeps the iterate on (or exponentially attracts it to)
the F = 0 manifold.  The linear system is solved once per sample by GMRES
with Jacobian-vector products approximated by a single extra forward-difference
residual evaluation, so no Jacobian is ever materialized; memory per step is
O(i_max * dim F).

A dense damped-Newton solver on a finite-difference Jacobian is also provided:
it is the offline initializer (finding U(0) with a small residual before the
loop starts) and the test oracle the tracking solver is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Tuple

import numpy as np

from .ocp import ImpedanceOcp, extract_control
from .plant import ControlInput


class Breakdown(RuntimeError):
    """GMRES cannot expand the Krylov space while the residual is still large."""


class InitializationFailed(RuntimeError):
    """The initializer could not reduce the residual below its tolerance."""


class SolverDiverged(RuntimeError):
    """The tracked residual exceeded the configured divergence bound."""


@dataclass(frozen=True)
class SolverSettings:
    """Continuation and Krylov parameters.

    `zeta` is the attraction rate of the residual manifold (the stabilizing
    matrix is -zeta*I); the default 1/ts gives deadbeat residual decay in the
    linear analysis.  `h_fd` is the forward-difference step for the
    Jacobian-vector products.
    """

    zeta: float = 100.0
    h_fd: float = 1e-6
    i_max: int = 12
    gmres_tol: float = 1e-6
    delta0: float = 0.05
    dt: float = 0.01
    divergence_bound: float = 1e4
    init_max_iter: int = 100
    u_dot_limit: float = 100.0
    slack_floor: float = 0.03
    mu_limit: float = 1e3
    control_limit: float = 25.0

    def __post_init__(self):
        if self.zeta <= 0.0:
            raise ValueError("zeta must be > 0")
        if self.h_fd <= 0.0:
            raise ValueError("h_fd must be > 0")
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.u_dot_limit <= 0.0:
            raise ValueError("u_dot_limit must be > 0")
        if self.slack_floor < 0.0 or self.mu_limit <= 0.0:
            raise ValueError("slack_floor must be >= 0 and mu_limit > 0")
        if self.control_limit <= 0.0:
            raise ValueError("control_limit must be > 0")


@dataclass(frozen=True)
class SolverState:
    """Everything the loop carries between samples (a value, never shared)."""

    U: np.ndarray
    u_dot_prev: np.ndarray
    x_prev: np.ndarray
    t: float
    last_residual: float
    last_iterations: int = 0
    u_dot_norm: float = 0.0


class GmresResult(NamedTuple):
    solution: np.ndarray
    residual_norm: float
    iterations: int
    residuals: Tuple[float, ...]


def fd_directional(f_eval, x, U, t: float, dx, dU, domega: float, h: float,
                   f0: np.ndarray | None = None) -> np.ndarray:
    """Forward-difference directional derivative of the residual map.

    Returns [f(x + h*dx, U + h*dU, t + h*domega) - f(x, U, t)] / h using one
    extra residual evaluation (two when `f0` is not supplied); never forms a
    Jacobian.
    """
    if h <= 0.0:
        raise ValueError("h must be > 0")
    if f0 is None:
        f0 = f_eval(x, U, t)
    x1 = x if dx is None else np.asarray(x, dtype=float) + h * np.asarray(dx, dtype=float)
    U1 = U if dU is None else np.asarray(U, dtype=float) + h * np.asarray(dU, dtype=float)
    return (f_eval(x1, U1, t + h * domega) - f0) / h


def continuation_rhs(f_eval, x, dx_dt, U, t: float, settings: SolverSettings,
                     f0: np.ndarray | None = None) -> np.ndarray:
    """Right-hand side b of the per-sample linear system F_U * U_dot = b.

    b = -zeta*F - D_h F(x, U, t : dx_dt, 0, 1): the first term pulls the
    residual toward zero, the second compensates the drift the moving state
    and clock would otherwise cause.
    """
    if f0 is None:
        f0 = f_eval(x, U, t)
    drift = fd_directional(f_eval, x, U, t, dx_dt, None, 1.0, settings.h_fd, f0=f0)
    return -settings.zeta * f0 - drift


def fdgmres(apply_a: Callable[[np.ndarray], np.ndarray], b, x0=None,
            i_max: int = 12, tol: float = 1e-6) -> GmresResult:
    """GMRES on matrix-vector products only (modified Gram-Schmidt + Givens).

    Minimizes |b - A*x| over x0 plus the Krylov space of the initial residual;
    stops at relative residual <= tol (relative to |b|) or after i_max basis
    vectors.  On stagnation the current minimizer is returned; a Krylov space
    that cannot even start while the residual is nonzero raises Breakdown.
    """
    b = np.asarray(b, dtype=float).ravel()
    n = b.size
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    if i_max < 1:
        raise ValueError("i_max must be >= 1")

    b_norm = float(np.linalg.norm(b))
    target = tol * b_norm
    r0 = b.copy() if not x0.any() else b - np.asarray(apply_a(x0), dtype=float)
    rho = float(np.linalg.norm(r0))
    if rho == 0.0 or rho <= target:
        return GmresResult(x0, rho, 0, ())

    m = min(i_max, n)
    V = np.empty((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = rho
    V[0] = r0 / rho

    residuals: list[float] = []
    k_used = 0
    for k in range(m):
        # copy: apply_a may hand back its argument (e.g. an identity operator)
        wv = np.array(apply_a(V[k]), dtype=float, copy=True).ravel()
        for i in range(k + 1):
            H[i, k] = float(np.dot(wv, V[i]))
            wv -= H[i, k] * V[i]
        H[k + 1, k] = float(np.linalg.norm(wv))
        invariant = H[k + 1, k] == 0.0
        if not invariant:
            V[k + 1] = wv / H[k + 1, k]

        for i in range(k):
            tmp = cs[i] * H[i, k] - sn[i] * H[i + 1, k]
            H[i + 1, k] = sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = tmp
        nu = math.hypot(H[k, k], H[k + 1, k])
        if nu == 0.0:
            if k == 0:
                raise Breakdown("first Krylov direction is annihilated with nonzero residual")
            break
        cs[k] = H[k, k] / nu
        sn[k] = -H[k + 1, k] / nu
        H[k, k] = nu
        H[k + 1, k] = 0.0
        g[k + 1] = sn[k] * g[k]
        g[k] = cs[k] * g[k]

        k_used = k + 1
        rho = abs(float(g[k + 1]))
        residuals.append(rho)
        if rho <= target or invariant:
            break

    y = np.zeros(k_used)
    for i in range(k_used - 1, -1, -1):
        acc = g[i]
        for jj in range(i + 1, k_used):
            acc -= H[i, jj] * y[jj]
        y[i] = acc / H[i, i]
    x = x0 + V[:k_used].T @ y
    return GmresResult(x, rho, k_used, tuple(residuals))


def dense_newton(f: Callable[[np.ndarray], np.ndarray], u0, tol_inf: float = 1e-9,
                 max_iter: int = 100, fd_step: float = 1e-7) -> Tuple[np.ndarray, float, int]:
    """Damped Newton on a dense forward-difference Jacobian.

    Offline-quality: one residual evaluation per Jacobian column.  Step
    halving on non-decrease of the max-norm residual; returns (solution,
    final residual max-norm, iterations) without raising, so callers decide
    what a failure means.
    """
    u = np.asarray(u0, dtype=float).ravel().copy()
    fu = np.asarray(f(u), dtype=float)
    res = float(np.max(np.abs(fu))) if fu.size else 0.0
    for it in range(max_iter):
        if res <= tol_inf:
            return u, res, it
        n = u.size
        jac = np.empty((fu.size, n))
        for jcol in range(n):
            h = fd_step * (1.0 + abs(float(u[jcol])))
            up = u.copy()
            up[jcol] += h
            jac[:, jcol] = (np.asarray(f(up), dtype=float) - fu) / h
        try:
            d = np.linalg.solve(jac, -fu)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(jac, -fu, rcond=None)[0]
        alpha = 1.0
        improved = False
        for _ in range(40):
            cand = u + alpha * d
            fc = np.asarray(f(cand), dtype=float)
            rc = float(np.max(np.abs(fc)))
            if rc < res:
                u, fu, res = cand, fc, rc
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
    return u, res, max_iter


def repair_slack_branch(U: np.ndarray, x, w_now, settings: SolverSettings,
                        ocp: ImpedanceOcp) -> np.ndarray:
    """Reset grossly inconsistent slack/multiplier blocks to their exact values.

    Given the predicted trajectory, the slack and multiplier of each stage are
    exactly solvable in closed form (s^2 = gain, 2*mu*s = ts*r_s); the
    continuation normally keeps the iterate on that branch by itself.  When a
    gain rides its bound, however, the branch turns singular: the slack
    collapses to zero, the multiplier diverges, and the iterate cannot find
    its way back (the linearized system loses rank along that direction).
    This guard re-seats only blocks that are grossly inconsistent with the
    prediction or carry a pathological multiplier; healthy tracking never
    trips it.
    """
    st = ocp.settings
    n = st.np_horizon
    xs = ocp.predict_states(x, [w_now] * n, U)
    out = U
    copied = False
    for j in range(n):
        base = 6 * j
        for k, idx in ((2, 6), (3, 7)):
            s = float(out[base + k])
            mu = float(out[base + k + 2])
            g = float(xs[j, idx])
            inconsistent = abs(s * s - g) > 0.1 * (1.0 + abs(g))
            if inconsistent or abs(mu) > settings.mu_limit:
                if not copied:
                    out = out.copy()
                    copied = True
                s_new = float(np.sqrt(max(g, settings.slack_floor ** 2)))
                out[base + k] = s_new
                out[base + k + 2] = st.ts * st.r_s / (2.0 * s_new) if s_new > 0.0 else 0.0
    return out


def initialize(x0, w0, t0: float, settings: SolverSettings, ocp: ImpedanceOcp) -> SolverState:
    """Find U(t0) with residual max-norm within `delta0` and package the state.

    Seeds analytically (zero controls, feasible slacks, centered multipliers)
    and polishes with damped Newton only if the seed is not already inside the
    tolerance; this runs once, offline, before the loop starts.
    """
    x_arr = np.asarray(x0, dtype=float).copy()
    f_eval = ocp.kkt_function(w0)
    U = ocp.seed_decision(x_arr, w0)
    res = float(np.max(np.abs(f_eval(x_arr, U, t0))))
    if res > settings.delta0:
        U, res, _ = dense_newton(lambda v: f_eval(x_arr, v, t0), U,
                                 tol_inf=settings.delta0, max_iter=settings.init_max_iter)
        if res > settings.delta0:
            raise InitializationFailed(
                f"residual {res:.3e} above tolerance {settings.delta0:.3e} "
                f"after {settings.init_max_iter} Newton iterations")
    return SolverState(U=U, u_dot_prev=np.zeros_like(U), x_prev=x_arr,
                       t=t0, last_residual=res)


def step(state: SolverState, x_meas, w_now, settings: SolverSettings,
         ocp: ImpedanceOcp) -> Tuple[ControlInput, SolverState]:
    """One sampling instant: track the manifold and emit the control to apply.

    Estimates the state rate from the measured difference quotient, solves
    F_U * U_dot = b once with warm-started FDGMRES, integrates U explicitly
    over the sample, and reports the residual at the updated iterate.
    """
    dt = settings.dt
    h = settings.h_fd
    x_arr = np.asarray(x_meas, dtype=float).copy()
    dx_dt = (x_arr - state.x_prev) / dt
    f_eval = ocp.kkt_function(w_now)

    f0 = f_eval(x_arr, state.U, state.t)
    b = continuation_rhs(f_eval, x_arr, dx_dt, state.U, state.t, settings, f0=f0)

    def apply_a(v: np.ndarray) -> np.ndarray:
        return (f_eval(x_arr, state.U + h * v, state.t) - f0) / h

    gm = fdgmres(apply_a, b, state.u_dot_prev, settings.i_max, settings.gmres_tol)
    u_dot = gm.solution
    # trust region: when the tracked gains sit on their bound the stationarity
    # system has no finite solution and the Krylov step can be huge; cap the
    # rate (direction preserved) so the iterate stays in a recoverable region
    peak = float(np.max(np.abs(u_dot))) if u_dot.size else 0.0
    if peak > settings.u_dot_limit:
        u_dot = u_dot * (settings.u_dot_limit / peak)
    U_raw = state.U + dt * u_dot
    # projected continuation: gain-modulation commands live in a physical box
    # far wider than anything the scenarios use; without it the iterate can
    # settle in a spurious short-horizon attractor at absurd gain levels
    # after an excursion through the constrained regime
    U_new = U_raw.copy()
    lim = settings.control_limit
    np.clip(U_new[0::6], -lim, lim, out=U_new[0::6])
    np.clip(U_new[1::6], -lim, lim, out=U_new[1::6])
    U_new = repair_slack_branch(U_new, x_arr, w_now, settings, ocp)
    # if projection or repair rewrote anything, the computed rate belongs to a
    # discarded branch; drop the whole warm start so the next Krylov solve is
    # anchored to the repaired iterate alone
    if not np.array_equal(U_new, U_raw):
        u_dot = np.zeros_like(u_dot)
    t_new = state.t + dt
    res = float(np.max(np.abs(f_eval(x_arr, U_new, t_new))))
    if not math.isfinite(res) or res > settings.divergence_bound:
        raise SolverDiverged(f"residual {res:.3e} at t={t_new:.3f}s")
    new_state = SolverState(U=U_new, u_dot_prev=u_dot, x_prev=x_arr, t=t_new,
                            last_residual=res, last_iterations=gm.iterations,
                            u_dot_norm=float(np.linalg.norm(u_dot)))
    return extract_control(U_new), new_state
