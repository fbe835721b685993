import math

import numpy as np
import pytest

from sddlab import (
    FieldState,
    Grid1D,
    IncidenceFn,
    ModelParams,
    ParamJump,
    SolverConfig,
    build_initial_segment,
    compatibility_residual,
    constant_delay,
    equilibrium_norm,
    equilibrium_state,
    eval_incidence,
    omega_lip_bounds,
    rhs,
    run,
    step,
    uniform_state,
)
from sddlab.solver import InitialData, apply_jump, validate_schedule

from .oracles import fixed_lag_euler, saturated_closed_form


@pytest.fixture(scope="module")
def grid3():
    return Grid1D(0.0, 1.0, 3)


def max_state_dev(a: FieldState, b: FieldState) -> float:
    return max(
        float(np.max(np.abs(a.T - b.T))),
        float(np.max(np.abs(a.T_star - b.T_star))),
        float(np.max(np.abs(a.V - b.V))),
    )


class TestRhs:
    def test_zero_at_interior_equilibrium(self, ref_params, saturated, grid3, sat_equilibrium):
        state = equilibrium_state(grid3, sat_equilibrium)
        out = rhs(state, state, ref_params, saturated, grid3)
        assert max_state_dev(out, 0.0 * state) <= 1e-10

    def test_zero_at_trivial_equilibrium(self, ref_params, saturated, grid3):
        state = uniform_state(grid3, (100.0, 0.0, 0.0))
        out = rhs(state, state, ref_params, saturated, grid3)
        assert max_state_dev(out, 0.0 * state) <= 1e-12

    def test_matches_hand_ode_without_diffusion(self, ref_params, saturated, grid3):
        state = uniform_state(grid3, (40.0, 12.0, 7.0))
        delayed = uniform_state(grid3, (35.0, 11.0, 6.0))
        out = rhs(state, delayed, ref_params, saturated, grid3)
        f_now = eval_incidence(saturated, 40.0, 7.0)
        f_del = eval_incidence(saturated, 35.0, 6.0)
        assert out.T[1] == pytest.approx(10.0 - 0.1 * 40.0 - f_now, rel=1e-14)
        assert out.T_star[1] == pytest.approx(f_del - 0.5 * 12.0, rel=1e-14)
        assert out.V[1] == pytest.approx(10.0 * 0.5 * 12.0 - 5.0 * 7.0, rel=1e-14)


class TestStep:
    def test_equilibrium_is_fixed_point(self, ref_params, saturated, grid3, sat_equilibrium):
        df = constant_delay(1.0, 0.4)
        cfg = SolverConfig(dt=0.01, t_end=1.0)
        eq_state = equilibrium_state(grid3, sat_equilibrium)
        seg = build_initial_segment(
            InitialData(preset="equilibrium_perturbation", epsilon=0.0, equilibrium=sat_equilibrium),
            grid3,
            1.0,
            0.01,
        )
        for _ in range(20):
            new, diag = step(seg, ref_params, saturated, df, cfg, grid3)
            assert diag.finite
            assert max_state_dev(new, eq_state) <= 1e-10

    def test_negative_clipping_counts(self, grid3):
        # strong bilinear incidence drives T negative within one Euler step
        params = ModelParams(lam=1.0, d=0.1, delta=0.5, burst_n=10, c=5, omega=0.0, h_max=0.5)
        f = IncidenceFn("bilinear", k=1.0)
        df = constant_delay(0.5, 0.1)
        initial = InitialData(preset="uniform", values=(0.01, 0.1, 500.0))
        seg = build_initial_segment(initial, grid3, 0.5, 0.1)
        cfg_clip = SolverConfig(dt=0.1, t_end=1.0, clip_negative=True)
        new, diag = step(seg, params, f, df, cfg_clip, grid3)
        assert diag.clipped > 0
        assert np.all(new.T >= 0.0)

    def test_without_clipping_violations_surface(self, grid3):
        params = ModelParams(lam=1.0, d=0.1, delta=0.5, burst_n=10, c=5, omega=0.0, h_max=0.5)
        f = IncidenceFn("bilinear", k=1.0)
        df = constant_delay(0.5, 0.1)
        initial = InitialData(preset="uniform", values=(0.01, 0.1, 500.0))
        traj = run(initial, params, f, df, SolverConfig(dt=0.1, t_end=0.3), Grid1D(0, 1, 3))
        assert traj.clip_events == 0
        assert int(np.sum(traj.lower_violations)) > 0


class TestRun:
    def test_constant_delay_matches_reference_integrator(self, ref_params, saturated, grid3, sat_equilibrium):
        lag, dt, t_end = 0.4, 0.02, 5.0
        eps = 0.05 * equilibrium_norm(sat_equilibrium)
        initial = InitialData(preset="equilibrium_perturbation", epsilon=eps, equilibrium=sat_equilibrium)
        traj = run(initial, ref_params, saturated, constant_delay(1.0, lag), SolverConfig(dt=dt, t_end=t_end), grid3)

        fsat = saturated_closed_form(0.1, 0.1)
        w = np.ones(3) / math.sqrt(3.0)
        u0 = np.array([sat_equilibrium.T_hat, sat_equilibrium.T_star_hat, sat_equilibrium.V_hat]) + eps * w

        def rhs3(u, ud):
            return [
                10.0 - 0.1 * u[0] - fsat(u[0], u[2]),
                fsat(ud[0], ud[2]) - 0.5 * u[1],
                10.0 * 0.5 * u[1] - 5.0 * u[2],
            ]

        ref = fixed_lag_euler(rhs3, lambda t: u0, lag, dt / 10.0, t_end)
        err = 0.0
        for k in range(len(traj)):
            s = traj.states[k]
            r = ref[10 * k]
            err = max(err, abs(s.T[0] - r[0]), abs(s.T_star[0] - r[1]), abs(s.V[0] - r[2]))
        assert err <= 20.0 * dt

    def test_box_containment_short(self, ref_params, saturated):
        params = ModelParams(lam=10, d=0.1, delta=0.5, burst_n=10, c=5, omega=0.0, h_max=1.0, diff=(1e-3, 1e-3, 2e-3))
        grid = Grid1D(0.0, 1.0, 41)
        initial = InitialData(preset="gaussian_bump", values=(50.0, 10.0, 10.0), bump_amp=(20.0, 30.0, 40.0))
        traj = run(initial, params, saturated, constant_delay(1.0, 0.4), SolverConfig(dt=0.01, t_end=5.0), grid)
        assert traj.bounds == pytest.approx((100.0, 200.0, 200.0))
        assert traj.violation_count() == 0

    def test_bilinear_run_has_no_upper_bounds(self, ref_params, bilinear, grid3):
        initial = InitialData(preset="uniform", values=(50.0, 10.0, 10.0))
        traj = run(initial, ref_params, bilinear, constant_delay(1.0, 0.4), SolverConfig(dt=0.05, t_end=1.0), grid3)
        assert traj.bounds is None
        assert traj.upper_violations is None

    def test_jump_alignment_shortens_one_step(self, ref_params, saturated, grid3):
        initial = InitialData(preset="uniform", values=(50.0, 10.0, 10.0))
        schedule = [ParamJump(0.105, "burst_n", 5.0)]
        traj = run(initial, ref_params, saturated, constant_delay(1.0, 0.4), SolverConfig(dt=0.01, t_end=0.2), grid3, schedule)
        gaps = np.diff(traj.times)[:-1]  # the final step may shorten to land on t_end
        assert np.any(np.abs(traj.times - 0.105) < 1e-12)
        short = gaps[gaps < 0.01 - 1e-12]
        assert len(short) == 1
        assert short[0] == pytest.approx(0.005, abs=1e-12)

    def test_jump_changes_v_slope(self, ref_params, saturated, grid3, sat_equilibrium):
        dt = 0.01
        initial = InitialData(preset="equilibrium_perturbation", epsilon=0.0, equilibrium=sat_equilibrium)
        traj = run(
            initial,
            ref_params,
            saturated,
            constant_delay(1.0, 0.4),
            SolverConfig(dt=dt, t_end=12.0),
            grid3,
            [ParamJump(10.0, "burst_n", 5.0)],
        )
        k = int(np.argmin(np.abs(traj.times - 10.0)))
        V = np.array([s.V[0] for s in traj.states])
        Ts = np.array([s.T_star[0] for s in traj.states])
        gap = abs(V[k + 1] - V[k])
        d_minus = (V[k] - V[k - 1]) / dt
        d_plus = (V[k + 1] - V[k]) / dt
        expected_kink = 0.5 * Ts[k] * (5.0 - 10.0)
        assert gap <= 10.0 * dt * abs(expected_kink)  # continuous in value
        assert (d_plus - d_minus) == pytest.approx(expected_kink, rel=0.10)

    def test_determinism_bitwise(self, ref_params, saturated, grid3, sat_equilibrium):
        initial = InitialData(
            preset="equilibrium_perturbation",
            epsilon=0.05 * equilibrium_norm(sat_equilibrium),
            equilibrium=sat_equilibrium,
        )
        cfg = SolverConfig(dt=0.01, t_end=2.0)
        a = run(initial, ref_params, saturated, constant_delay(1.0, 0.4), cfg, grid3)
        b = run(initial, ref_params, saturated, constant_delay(1.0, 0.4), cfg, grid3)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.eta, b.eta)
        for sa, sb in zip(a.states, b.states):
            assert np.array_equal(sa.V, sb.V)

    def test_self_convergence_richardson(self, ref_params, saturated, grid3, sat_equilibrium):
        # euler is first order; the frozen delayed state caps rk4_frozen_lag
        # at first order too, with a no-worse error constant
        initial = InitialData(
            preset="equilibrium_perturbation",
            epsilon=0.05 * equilibrium_norm(sat_equilibrium),
            equilibrium=sat_equilibrium,
        )

        def final(stepper, dt):
            cfg = SolverConfig(dt=dt, t_end=5.0, stepper=stepper)
            tr = run(initial, ref_params, saturated, constant_delay(1.0, 0.4), cfg, grid3)
            s = tr.states[-1]
            return np.array([s.T[0], s.T_star[0], s.V[0]])

        errors = {}
        for stepper in ("euler", "rk4_frozen_lag"):
            u1, u2, u4 = (final(stepper, dtv) for dtv in (0.05, 0.025, 0.0125))
            e1 = float(np.max(np.abs(u1 - u2)))
            e2 = float(np.max(np.abs(u2 - u4)))
            errors[stepper] = e1
            ratio = e1 / e2
            assert 1.6 <= ratio <= 2.6
        assert errors["rk4_frozen_lag"] <= errors["euler"] * 1.05

    def test_abort_on_blowup(self, grid3):
        params = ModelParams(lam=10, d=0.1, delta=0.5, burst_n=1e12, c=5, omega=0.0, h_max=0.5)
        f = IncidenceFn("bilinear", k=10.0)
        initial = InitialData(preset="uniform", values=(50.0, 10.0, 10.0))
        traj = run(initial, params, f, constant_delay(0.5, 0.1), SolverConfig(dt=0.5, t_end=50.0), grid3)
        assert traj.aborted
        assert traj.abort_time is not None
        assert len(traj) >= 1
        assert all(s.allfinite() for s in traj.states)

    def test_degenerate_zero_duration(self, ref_params, saturated, grid3):
        initial = InitialData(preset="uniform", values=(50.0, 10.0, 10.0))
        traj = run(initial, ref_params, saturated, constant_delay(1.0, 0.4), SolverConfig(dt=0.01, t_end=0.0), grid3)
        assert len(traj) == 1
        assert not traj.aborted

    def test_eta_recorded_constant(self, ref_params, saturated, grid3):
        initial = InitialData(preset="uniform", values=(50.0, 10.0, 10.0))
        traj = run(initial, ref_params, saturated, constant_delay(1.0, 0.37), SolverConfig(dt=0.01, t_end=1.0), grid3)
        assert np.all(traj.eta == 0.37)
        assert np.all(traj.eta_rate == 0.0)


class TestInitialData:
    def test_uniform_profile(self, grid3):
        seg = build_initial_segment(InitialData(preset="uniform", values=(1.0, 2.0, 3.0)), grid3, 1.0, 0.1)
        assert seg.t_now == 0.0
        assert seg.covers()
        assert np.all(seg.state_now.V == 3.0)
        assert np.all(seg.states[0].V == 3.0)

    def test_gaussian_bump_shape(self):
        grid = Grid1D(0.0, 1.0, 101)
        initial = InitialData(
            preset="gaussian_bump", values=(10.0, 0.0, 0.0), bump_amp=(5.0, 0.0, 0.0), bump_center=0.5, bump_width=0.1
        )
        seg = build_initial_segment(initial, grid, 1.0, 0.1)
        assert seg.state_now.T[50] == pytest.approx(15.0, abs=1e-9)
        assert seg.state_now.T[0] == pytest.approx(10.0, abs=1e-6)

    def test_linear_ramp_is_lipschitz(self, grid3, sat_equilibrium):
        eps = 2.0
        initial = InitialData(
            preset="equilibrium_perturbation",
            epsilon=eps,
            equilibrium=sat_equilibrium,
            profile="linear_ramp",
        )
        seg = build_initial_segment(initial, grid3, 1.0, 0.1)
        quotients = [
            max_state_dev(seg.states[i + 1], seg.states[i]) / (seg.times[i + 1] - seg.times[i])
            for i in range(len(seg) - 1)
        ]
        assert max(quotients) <= eps / 1.0 * 1.01  # ramp slope = |u0 - eq| / h
        assert max_state_dev(seg.states[0], equilibrium_state(grid3, sat_equilibrium)) <= 1e-12

    def test_perturbation_requires_equilibrium_at_build_time(self, grid3):
        bare = InitialData(preset="equilibrium_perturbation", epsilon=0.1)
        with pytest.raises(ValueError, match="equilibrium"):
            build_initial_segment(bare, grid3, 1.0, 0.1)


class TestScheduleValidation:
    def test_names_and_windows(self, ref_params):
        with pytest.raises(ValueError, match="unknown parameter"):
            validate_schedule([ParamJump(1.0, "nope", 1.0)], 10.0, ref_params)
        with pytest.raises(ValueError, match="outside"):
            validate_schedule([ParamJump(11.0, "burst_n", 5.0)], 10.0, ref_params)
        with pytest.raises(ValueError, match="increasing"):
            validate_schedule(
                [ParamJump(2.0, "burst_n", 5.0), ParamJump(1.0, "c", 2.0)], 10.0, ref_params
            )
        with pytest.raises(ValueError, match="lam"):
            validate_schedule([ParamJump(1.0, "lambda", -5.0)], 10.0, ref_params)

    def test_apply_jump_diffusion(self, ref_params):
        out = apply_jump(ref_params, ParamJump(1.0, "d2", 0.25))
        assert out.diff == (0.0, 0.25, 0.0)


class TestDiagnostics:
    def test_omega_lip_bounds_formula(self, ref_params):
        assert omega_lip_bounds(ref_params, 1.0) == pytest.approx((100.0, 200.0, 200.0))
        assert omega_lip_bounds(ref_params, None) is None

    def test_compatibility_residual_zero_at_equilibrium(self, ref_params, saturated, grid3, sat_equilibrium):
        initial = InitialData(preset="equilibrium_perturbation", epsilon=0.0, equilibrium=sat_equilibrium)
        seg = build_initial_segment(initial, grid3, 1.0, 0.01)
        res = compatibility_residual(seg, ref_params, saturated, constant_delay(1.0, 0.4), grid3)
        assert res <= 1e-9

    def test_compatibility_residual_reports_ramp_mismatch(self, ref_params, saturated, grid3, sat_equilibrium):
        initial = InitialData(
            preset="equilibrium_perturbation",
            epsilon=3.0,
            equilibrium=sat_equilibrium,
            profile="linear_ramp",
        )
        seg = build_initial_segment(initial, grid3, 1.0, 0.01)
        res = compatibility_residual(seg, ref_params, saturated, constant_delay(1.0, 0.4), grid3)
        assert np.isfinite(res)
        assert res > 0.1

    def test_segment_at_requires_trailing_history(self, ref_params, saturated, grid3):
        initial = InitialData(preset="uniform", values=(50.0, 10.0, 10.0))
        traj = run(initial, ref_params, saturated, constant_delay(1.0, 0.4), SolverConfig(dt=0.1, t_end=3.0), grid3)
        k_late = int(np.searchsorted(traj.times, 2.0))
        seg = traj.segment_at(k_late)
        assert seg.covers()
        with pytest.raises(ValueError):
            traj.segment_at(1)
