import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sddlab import (
    FieldState,
    Grid1D,
    HistorySegment,
    ModelParams,
    SolverConfig,
    certify_local_stability,
    constant_delay,
    distance_to_equilibrium,
    equilibrium_norm,
    equilibrium_state,
    integral_delay,
    monitor,
    rate_decomposition,
    run,
    state_mean_reducer,
    trivial_equilibrium,
    u_sdd_pointwise,
    u_sdd_total,
    volterra_v,
)
from sddlab.lyapunov import c1_algebraic_fields, c1_seven_v_fields, u_sdd_fields
from sddlab.solver import InitialData


@pytest.fixture(scope="module")
def grid5():
    return Grid1D(0.0, 1.0, 5)


def eq_segment(grid, eq, h_max=1.0, dt=0.1):
    return HistorySegment.from_profile(h_max, dt, 0.0, lambda t: equilibrium_state(grid, eq))


class TestVolterra:
    def test_zero_at_one(self):
        assert volterra_v(1.0) == 0.0

    def test_hand_value_at_e(self):
        assert volterra_v(math.e) == pytest.approx(math.e - 2.0, rel=1e-15)

    def test_quadratic_bounds_hand_point(self):
        # mu = 0.5, s = 1.3
        v = volterra_v(1.3)
        assert (1.3 - 1.0) ** 2 / (2.0 * 1.5) <= v <= (1.3 - 1.0) ** 2 / (2.0 * 0.5)
        assert v == pytest.approx(0.0376357, abs=1e-6)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            volterra_v(0.0)
        with pytest.raises(ValueError):
            volterra_v(-1.0)

    @given(s=st.floats(1e-6, 1e6))
    def test_nonnegative_zero_only_at_one(self, s):
        v = volterra_v(s)
        assert v >= 0.0
        if abs(s - 1.0) > 1e-6:
            assert v > 0.0

    @given(mu=st.floats(0.01, 0.99), frac=st.floats(-0.999, 0.999))
    def test_quadratic_bounds_property(self, mu, frac):
        s = 1.0 + frac * mu
        v = volterra_v(s)
        lo = (s - 1.0) ** 2 / (2.0 * (1.0 + mu))
        hi = (s - 1.0) ** 2 / (2.0 * (1.0 - mu))
        assert lo <= v + 1e-12
        assert v <= hi + 1e-12


class TestUsdd:
    def test_zero_at_equilibrium(self, ref_params, saturated, grid5, sat_equilibrium):
        df = constant_delay(1.0, 0.4)
        seg = eq_segment(grid5, sat_equilibrium)
        total, ok = u_sdd_total(seg, sat_equilibrium, ref_params, saturated, df, grid5)
        assert ok
        assert abs(total) <= 1e-10
        assert u_sdd_pointwise(seg.state_now, seg, sat_equilibrium, ref_params, saturated, df, grid5, 2) == 0.0

    def test_doubled_v_gives_third_term_only(self, ref_params, saturated, grid5, sat_equilibrium):
        df = constant_delay(1.0, 0.4)
        seg = eq_segment(grid5, sat_equilibrium)
        base = equilibrium_state(grid5, sat_equilibrium)
        state2 = FieldState(base.T, base.T_star, 2.0 * base.V)
        got = u_sdd_pointwise(state2, seg, sat_equilibrium, ref_params, saturated, df, grid5, 1)
        expected = (sat_equilibrium.V_hat / ref_params.burst_n) * volterra_v(2.0)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_zero_lag_drops_history_term(self, ref_params, saturated, grid5, sat_equilibrium):
        # make the history deviate so the tail integral would not vanish
        dev = equilibrium_state(grid5, sat_equilibrium)
        seg = HistorySegment.from_profile(
            1.0, 0.1, 0.0, lambda t: FieldState(dev.T, dev.T_star, dev.V * (1.0 + 0.2 * (t + 1.0)))
        )
        with_lag, ok1 = u_sdd_total(seg, sat_equilibrium, ref_params, saturated, constant_delay(1.0, 0.4), grid5)
        no_lag, ok2 = u_sdd_total(seg, sat_equilibrium, ref_params, saturated, constant_delay(1.0, 0.0), grid5)
        assert ok1 and ok2
        assert with_lag > no_lag  # the eta > 0 tail adds a positive term

    def test_invalid_on_nonpositive_state(self, ref_params, saturated, grid5, sat_equilibrium):
        df = constant_delay(1.0, 0.4)
        seg = eq_segment(grid5, sat_equilibrium)
        base = equilibrium_state(grid5, sat_equilibrium)
        bad = FieldState(base.T, 0.0 * base.T_star, base.V)
        fields, ok = u_sdd_fields(seg, sat_equilibrium, ref_params, saturated, df, grid5, state_now=bad)
        assert not ok and fields is None
        with pytest.raises(ValueError):
            u_sdd_pointwise(bad, seg, sat_equilibrium, ref_params, saturated, df, grid5, 0)

    def test_nonnegative_along_perturbed_run(self, ref_params, saturated, grid5, sat_equilibrium):
        df = constant_delay(1.0, 0.4)
        initial = InitialData(
            preset="equilibrium_perturbation",
            epsilon=0.1 * equilibrium_norm(sat_equilibrium),
            equilibrium=sat_equilibrium,
        )
        traj = run(initial, ref_params, saturated, df, SolverConfig(dt=0.05, t_end=4.0), grid5)
        for k in range(25, len(traj), 10):
            total, ok = u_sdd_total(traj.segment_at(k), sat_equilibrium, ref_params, saturated, df, grid5)
            assert ok
            assert total >= 0.0
        total0, _ = u_sdd_total(traj.segment_at(25), sat_equilibrium, ref_params, saturated, df, grid5)
        assert total0 > 0.0


class TestSevenLogIdentity:
    def test_identity_on_random_positive_states(self, ref_params, saturated, grid5, sat_equilibrium):
        rng = np.random.default_rng(7)
        eq = sat_equilibrium
        for _ in range(50):
            jitter = lambda base: base * rng.uniform(0.5, 1.6, grid5.nx)
            state = FieldState(jitter(eq.T_hat), jitter(eq.T_star_hat), jitter(eq.V_hat))
            delayed = FieldState(jitter(eq.T_hat), jitter(eq.T_star_hat), jitter(eq.V_hat))
            alg = c1_algebraic_fields(state, delayed, eq, saturated)
            seven = c1_seven_v_fields(state, delayed, eq, saturated)
            dev = float(np.max(np.abs(alg - seven)))
            scale = float(max(np.max(np.abs(alg)), np.max(np.abs(seven))))
            assert dev <= 1e-9 * scale + 1e-14


@pytest.fixture(scope="module")
def perturbed_traj(ref_params, saturated, sat_equilibrium):
    grid = Grid1D(0.0, 1.0, 21)
    params = ModelParams(
        lam=10, d=0.1, delta=0.5, burst_n=10, c=5, omega=0.0, h_max=1.0, diff=(1e-3, 1e-3, 2e-3)
    )
    df = constant_delay(1.0, 0.4)
    initial = InitialData(
        preset="equilibrium_perturbation",
        epsilon=0.05 * equilibrium_norm(sat_equilibrium),
        equilibrium=sat_equilibrium,
        direction="gaussian_bump",
        weights=(0.6, -0.2, 0.77),
        bump_center=0.4,
        bump_width=0.15,
    )
    traj = run(initial, params, saturated, df, SolverConfig(dt=0.01, t_end=8.0), grid)
    return params, df, grid, traj


class TestRateDecomposition:

    def test_equilibrium_trajectory_all_zero(self, ref_params, saturated, grid5, sat_equilibrium):
        df = constant_delay(1.0, 0.4)
        initial = InitialData(preset="equilibrium_perturbation", epsilon=0.0, equilibrium=sat_equilibrium)
        traj = run(initial, ref_params, saturated, df, SolverConfig(dt=0.05, t_end=4.0), grid5)
        sample = rate_decomposition(traj, len(traj) // 2, sat_equilibrium, ref_params, saturated, df, grid5)
        assert sample.valid
        assert abs(sample.U) <= 1e-10
        assert abs(sample.dU_dt_fd) <= 1e-10
        assert sample.S_int == 0.0
        assert abs(sample.D_int) <= 1e-10
        assert sample.Ddiff == 0.0

    def test_constant_delay_s_term_identically_zero(self, perturbed_traj, sat_equilibrium, saturated):
        params, df, grid, traj = perturbed_traj
        samples = monitor(traj, sat_equilibrium, params, saturated, df, grid, stride=20)
        assert len(samples) > 5
        assert all(s.valid for s in samples)
        assert all(s.S_int == 0.0 for s in samples)

    def test_diffusion_terms_nonpositive(self, perturbed_traj, sat_equilibrium, saturated):
        params, df, grid, traj = perturbed_traj
        for s in monitor(traj, sat_equilibrium, params, saturated, df, grid, stride=20):
            assert all(term <= 1e-8 for term in s.Ddiff_terms)
            assert s.Ddiff <= 1e-8

    def test_identity_along_trajectory(self, perturbed_traj, sat_equilibrium, saturated):
        params, df, grid, traj = perturbed_traj
        for s in monitor(traj, sat_equilibrium, params, saturated, df, grid, stride=20):
            assert s.c1_abs_dev <= 1e-9 * s.c1_scale + 1e-14

    def test_decomposition_residual_small(self, perturbed_traj, sat_equilibrium, saturated):
        params, df, grid, traj = perturbed_traj
        samples = monitor(traj, sat_equilibrium, params, saturated, df, grid, stride=20)
        for s in samples:
            assert s.residual <= 1e-3 * max(1.0, abs(s.dU_dt_fd))

    def test_no_diffusion_means_zero_ddiff(self, ref_params, saturated, grid5, sat_equilibrium):
        df = constant_delay(1.0, 0.4)
        initial = InitialData(
            preset="equilibrium_perturbation",
            epsilon=0.5,
            equilibrium=sat_equilibrium,
            direction="gaussian_bump",
        )
        traj = run(initial, ref_params, saturated, df, SolverConfig(dt=0.05, t_end=4.0), grid5)
        sample = rate_decomposition(traj, len(traj) - 10, sat_equilibrium, ref_params, saturated, df, grid5)
        assert sample.valid
        assert sample.Ddiff == 0.0
        assert sample.Ddiff_terms == (0.0, 0.0, 0.0)

    def test_needs_neighbors(self, perturbed_traj, sat_equilibrium, saturated):
        params, df, grid, traj = perturbed_traj
        with pytest.raises(ValueError):
            rate_decomposition(traj, 0, sat_equilibrium, params, saturated, df, grid)


class TestCertify:
    def test_constant_delay_small_eps_stable(self, ref_params, saturated, sat_equilibrium):
        grid = Grid1D(0.0, 1.0, 11)
        df = constant_delay(1.0, 0.4)
        cfg = SolverConfig(dt=0.01, t_end=8.0)
        verdicts = certify_local_stability(
            sat_equilibrium,
            [0.05 * equilibrium_norm(sat_equilibrium)],
            ref_params,
            saturated,
            df,
            cfg,
            grid,
            seed=3,
        )
        assert len(verdicts) == 1
        v = verdicts[0]
        assert v.verdict == "stable_evidence"
        assert v.decrease_fraction == 1.0
        assert v.s_over_d == 0.0
        assert v.max_eta_rate == 0.0
        assert v.terminal_distance < v.initial_distance

    def test_eta_rate_shrinks_with_eps(self, ref_params, saturated, sat_equilibrium):
        grid = Grid1D(0.0, 1.0, 11)
        a = 0.4 / sat_equilibrium.V_hat
        df = integral_delay(1.0, state_mean_reducer(grid, "V", a))
        cfg = SolverConfig(dt=0.01, t_end=5.0)
        norm = equilibrium_norm(sat_equilibrium)
        verdicts = certify_local_stability(
            sat_equilibrium,
            [0.1 * norm, 0.05 * norm, 0.025 * norm],
            ref_params,
            saturated,
            df,
            cfg,
            grid,
            seed=3,
        )
        rates = [v.max_eta_rate for v in verdicts]
        assert rates[0] >= rates[1] >= rates[2]
        assert verdicts[-1].s_over_d < 1.0

    def test_huge_perturbation_degrades_gracefully(self, ref_params, saturated, sat_equilibrium):
        # seed 2 draws a bump direction with strongly negative T*/V weights,
        # so a 20*norm displacement leaves the positive cone: the monitor must
        # invalidate samples (or the run abort) without ever crashing
        grid = Grid1D(0.0, 1.0, 5)
        df = constant_delay(1.0, 0.4)
        cfg = SolverConfig(dt=0.01, t_end=4.0)
        verdicts = certify_local_stability(
            sat_equilibrium,
            [20.0 * equilibrium_norm(sat_equilibrium)],
            ref_params,
            saturated,
            df,
            cfg,
            grid,
            directions=("gaussian_bump",),
            seed=2,
        )
        assert verdicts[0].verdict in ("inconclusive", "instability_evidence")

    def test_trivial_equilibrium_rejected(self, ref_params, saturated):
        grid = Grid1D(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            certify_local_stability(
                trivial_equilibrium(ref_params, saturated),
                [0.1],
                ref_params,
                saturated,
                constant_delay(1.0, 0.4),
                SolverConfig(dt=0.01, t_end=1.0),
                grid,
            )

    def test_distance_metric(self, sat_equilibrium):
        grid = Grid1D(0.0, 1.0, 5)
        state = equilibrium_state(grid, sat_equilibrium)
        assert distance_to_equilibrium(state, sat_equilibrium, grid) == 0.0
        shifted = FieldState(state.T + 3.0, state.T_star, state.V)
        assert distance_to_equilibrium(shifted, sat_equilibrium, grid) == pytest.approx(3.0, rel=1e-12)
