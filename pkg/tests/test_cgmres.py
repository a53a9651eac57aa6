import numpy as np
import numpy.testing as npt
import pytest

from hapticsteer import cgmres
from hapticsteer.agents import ACTIVE_SAFETY_WEIGHTS, CostWeights
from hapticsteer.cgmres import (Breakdown, SolverSettings, SolverState,
                                continuation_rhs, dense_newton, fd_directional,
                                fdgmres, initialize, step)
from hapticsteer.ocp import ImpedanceOcp, OcpSettings
from hapticsteer.plant import MechanicalParams


def affine_eval(M, c):
    """Residual map F(x, U, t) = M U - c with no state or time dependence."""
    def f(x, U, t):
        return M @ np.asarray(U, float) - c
    return f


class TestFdDirectional:
    def test_zero_directions_give_zero(self):
        f = affine_eval(np.eye(3), np.ones(3))
        out = fd_directional(f, np.zeros(1), np.zeros(3), 0.0,
                             np.zeros(1), np.zeros(3), 0.0, 1e-6)
        npt.assert_array_equal(out, np.zeros(3))

    def test_exact_for_linear_maps(self):
        rng = np.random.default_rng(0)
        M = rng.normal(size=(4, 4))
        f = affine_eval(M, rng.normal(size=4))
        v = rng.normal(size=4)
        for h in (1e-8, 1e-4, 1e-1):
            out = fd_directional(f, np.zeros(1), np.zeros(4), 0.0, None, v, 0.0, h)
            npt.assert_allclose(out, M @ v, rtol=1e-6, atol=1e-9)

    def test_first_order_truncation_for_quadratics(self):
        def f(x, U, t):
            return np.array([U[0] ** 2])

        v = np.array([1.0])
        u0 = np.array([0.7])
        exact = 2 * 0.7
        errs = []
        for h in (1e-3, 5e-4):
            out = fd_directional(f, np.zeros(1), u0, 0.0, None, v, 0.0, h)
            errs.append(abs(out[0] - exact))
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)

    def test_bad_step_rejected(self):
        with pytest.raises(ValueError):
            fd_directional(affine_eval(np.eye(2), np.zeros(2)), None,
                           np.zeros(2), 0.0, None, None, 0.0, 0.0)


class TestFdgmres:
    def test_identity_one_iteration(self):
        b = np.array([3.0, -1.0, 2.0])
        res = fdgmres(lambda v: v, b, None, i_max=5, tol=1e-12)
        npt.assert_allclose(res.solution, b, rtol=1e-14)
        assert res.iterations == 1

    def test_zero_rhs_zero_start(self):
        res = fdgmres(lambda v: v, np.zeros(4), np.zeros(4), i_max=5, tol=1e-12)
        npt.assert_array_equal(res.solution, np.zeros(4))
        assert res.iterations == 0
        assert res.residual_norm == 0.0

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(4)
        A = 10.0 * np.eye(12) + rng.normal(size=(12, 12))
        b = rng.normal(size=12)
        res = fdgmres(lambda v: A @ v, b, None, i_max=12, tol=1e-14)
        x_lu = np.linalg.solve(A, b)
        assert np.linalg.norm(res.solution - x_lu) / np.linalg.norm(x_lu) < 1e-8

    def test_warm_start(self):
        rng = np.random.default_rng(5)
        A = 8.0 * np.eye(10) + rng.normal(size=(10, 10))
        b = rng.normal(size=10)
        x_lu = np.linalg.solve(A, b)
        res = fdgmres(lambda v: A @ v, b, x_lu + 1e-3 * rng.normal(size=10),
                      i_max=10, tol=1e-12)
        npt.assert_allclose(res.solution, x_lu, rtol=1e-9, atol=1e-12)

    def test_residuals_non_increasing(self):
        rng = np.random.default_rng(6)
        A = 2.0 * np.eye(30) + rng.normal(size=(30, 30))
        b = rng.normal(size=30)
        res = fdgmres(lambda v: A @ v, b, None, i_max=12, tol=1e-14)
        hist = np.array(res.residuals)
        assert np.all(np.diff(hist) <= 1e-12)

    def test_breakdown_on_annihilated_direction(self):
        A = np.zeros((3, 3))
        with pytest.raises(Breakdown):
            fdgmres(lambda v: A @ v, np.array([1.0, 0.0, 0.0]), None, i_max=3,
                    tol=1e-12)

    def test_happy_breakdown_returns_exact_solution(self):
        # operator with a 2-dimensional Krylov space for this rhs
        A = np.diag([2.0, 2.0, 5.0])
        b = np.array([1.0, 1.0, 0.0])
        res = fdgmres(lambda v: A @ v, b, None, i_max=3, tol=1e-15)
        npt.assert_allclose(res.solution, b / 2.0, rtol=1e-12)


class TestContinuationRhs:
    def test_zero_on_manifold_stationary(self):
        M = np.eye(3)
        c = np.array([1.0, 2.0, 3.0])
        f = affine_eval(M, c)
        settings = SolverSettings()
        b = continuation_rhs(f, np.zeros(1), np.zeros(1), c.copy(), 0.0, settings)
        npt.assert_allclose(b, np.zeros(3), atol=1e-12)

    def test_affine_closed_form(self):
        rng = np.random.default_rng(7)
        M = 5.0 * np.eye(4) + rng.normal(size=(4, 4))
        c = rng.normal(size=4)
        f = affine_eval(M, c)
        settings = SolverSettings(zeta=50.0)
        U = rng.normal(size=4)
        b = continuation_rhs(f, np.zeros(1), np.zeros(1), U, 0.0, settings)
        npt.assert_allclose(b, -50.0 * (M @ U - c), rtol=1e-7, atol=1e-8)

    def test_sign_pulls_residual_down(self):
        f = affine_eval(np.eye(1), np.zeros(1))
        settings = SolverSettings(zeta=10.0)
        b = continuation_rhs(f, np.zeros(1), np.zeros(1), np.array([2.0]), 0.0,
                             settings)
        assert b[0] < 0.0


class TestAffineContinuationLoop:
    def run_loop(self, zeta_dt, steps=12, dim=8, seed=8):
        rng = np.random.default_rng(seed)
        M = 6.0 * np.eye(dim) + rng.normal(size=(dim, dim))
        c = rng.normal(size=dim)
        f = affine_eval(M, c)
        dt = 0.01
        settings = SolverSettings(zeta=zeta_dt / dt, dt=dt, h_fd=1e-6)
        U = rng.normal(size=dim)
        u_dot = np.zeros(dim)
        norms = [np.linalg.norm(f(None, U, 0.0))]
        for _ in range(steps):
            f0 = f(None, U, 0.0)
            b = continuation_rhs(f, np.zeros(1), np.zeros(1), U, 0.0, settings, f0=f0)
            apply_a = lambda v: fd_directional(f, np.zeros(1), U, 0.0, None, v,
                                               0.0, settings.h_fd, f0=f0)
            res = fdgmres(apply_a, b, u_dot, i_max=dim, tol=1e-12)
            u_dot = res.solution
            U = U + dt * u_dot
            norms.append(np.linalg.norm(f(None, U, 0.0)))
        return np.array(norms), U, np.linalg.solve(M, c)

    def test_deadbeat_converges_in_one_step(self):
        norms, U, exact = self.run_loop(1.0, steps=3)
        assert norms[1] / norms[0] < 1e-6
        npt.assert_allclose(U, exact, rtol=1e-6, atol=1e-9)

    def test_geometric_decay_matches_one_minus_zeta_dt(self):
        norms, U, exact = self.run_loop(0.5, steps=30)
        ratios = norms[1:6] / norms[:5]
        npt.assert_allclose(ratios, 0.5, rtol=0.1)
        npt.assert_allclose(U, exact, rtol=1e-4, atol=1e-7)


class TestDenseNewton:
    def test_solves_nonlinear_system(self):
        def f(v):
            return np.array([v[0] ** 2 - 1.0, v[1] - v[0]])

        sol, res, _ = dense_newton(f, np.array([2.0, 0.0]), tol_inf=1e-12)
        npt.assert_allclose(sol, [1.0, 1.0], rtol=1e-9)
        assert res <= 1e-12

    def test_looser_tolerance_never_needs_more_iterations(self):
        def f(v):
            return np.array([np.tanh(v[0]) - 0.3, v[1] ** 3 + v[1] - 1.0])

        _, _, it_tight = dense_newton(f, np.zeros(2), tol_inf=1e-10)
        _, _, it_loose = dense_newton(f, np.zeros(2), tol_inf=2e-10)
        assert it_loose <= it_tight


def table1_setup(weights=ACTIVE_SAFETY_WEIGHTS, z_h=(0.1, 0.1)):
    params = MechanicalParams()
    ocp = ImpedanceOcp(params, OcpSettings(weights=weights))
    x0 = np.zeros(8)
    x0[4:6] = z_h
    x0[6:8] = z_h
    w0 = np.array([z_h[0], z_h[1], 0.0, 0.0, 0.0, 0.0, 0.0])
    return ocp, x0, w0


class TestInitialize:
    def test_zero_weight_seed_needs_no_newton(self):
        params = MechanicalParams()
        ocp = ImpedanceOcp(params, OcpSettings(
            weights=CostWeights(0.0, 0.0, 0.0), r_u=0.0, r_s=0.0))
        x0 = np.zeros(8)
        x0[4:] = 0.5
        w0 = np.array([0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0])
        state = initialize(x0, w0, 0.0, SolverSettings(), ocp)
        npt.assert_allclose(state.U, ocp.seed_decision(x0, w0), rtol=0, atol=0)
        assert state.last_residual < 1e-12

    def test_benchmark_active_safety_within_tolerance(self):
        ocp, x0, w0 = table1_setup()
        state = initialize(x0, w0, 0.0, SolverSettings(), ocp)
        assert state.last_residual <= 0.05

    def test_unreachable_tolerance_raises(self):
        ocp, x0, w0 = table1_setup()
        x0[0] = 0.5  # large twist: residual cannot be polished to ~0 in 1 iteration
        with pytest.raises(cgmres.InitializationFailed):
            initialize(x0, w0, 0.0,
                       SolverSettings(delta0=1e-14, init_max_iter=1), ocp)


class TestStep:
    def test_stationary_point_is_fixed(self):
        params = MechanicalParams()
        ocp = ImpedanceOcp(params, OcpSettings(
            weights=CostWeights(0.0, 0.0, 0.0), r_u=0.0, r_s=0.0))
        x0 = np.zeros(8)
        w0 = np.zeros(7)
        state = initialize(x0, w0, 0.0, SolverSettings(), ocp)
        control, nxt = step(state, x0, w0, SolverSettings(), ocp)
        npt.assert_array_equal(nxt.U, state.U)
        assert control == (0.0, 0.0)
        assert nxt.last_iterations == 0

    def test_divergence_bound_raises(self):
        ocp, x0, w0 = table1_setup()
        state = initialize(x0, w0, 0.0, SolverSettings(), ocp)
        x_far = x0.copy()
        x_far[0] = 2.0  # absurd measured twist
        with pytest.raises(cgmres.SolverDiverged):
            step(state, x_far, w0, SolverSettings(divergence_bound=1e-6), ocp)

    def test_deterministic(self):
        ocp, x0, w0 = table1_setup()
        settings = SolverSettings()
        outs = []
        for _ in range(2):
            state = initialize(x0, w0, 0.0, settings, ocp)
            x = x0.copy()
            x[0] += 1e-5
            control, nxt = step(state, x, w0, settings, ocp)
            outs.append((control, nxt.U.copy()))
        assert outs[0][0] == outs[1][0]
        npt.assert_array_equal(outs[0][1], outs[1][1])


class TestSettingsValidation:
    def test_bad_zeta(self):
        with pytest.raises(ValueError):
            SolverSettings(zeta=0.0)

    def test_bad_imax(self):
        with pytest.raises(ValueError):
            SolverSettings(i_max=0)
