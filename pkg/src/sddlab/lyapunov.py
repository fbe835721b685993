"""Lyapunov functional along trajectories and empirical stability verdicts.

The functional is evaluated pointwise in space and integrated over the
domain.  At a node it is the sum of four nonnegative pieces built from the
Volterra function v(s) = s - 1 - ln(s):

    e^{-omega h} * ( T - T_hat - int_{T_hat}^{T} f_hat / f(theta, V_hat) dtheta )
    + T*_hat * v(T*/T*_hat)
    + (V_hat/N) * v(V/V_hat)
    + delta T*_hat * int_{t-eta(u_t)}^{t} v( f(T(theta,x), V(theta,x)) / f_hat ) dtheta

with f_hat = f(T_hat, V_hat).  Its time derivative decomposes into strictly
dissipative terms (grouped here as D_int >= 0, including the diffusion
contribution Ddiff <= 0) and one sign-indefinite term S_int proportional to
the delay rate d(eta)/dt, which vanishes identically for constant delay.
The monitor computes the rate both ways: by central differences of the
directly evaluated functional and from the decomposition; their mismatch is
reported as a discretization health metric.

Any logarithm argument at or below ``LOG_FLOOR`` marks the sample invalid
instead of producing infinities; clamping would silently corrupt the
decrease verdict near the boundary of the positive cone.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .equilibria import Equilibrium
from .grid import Grid1D, gradient_central, integrate
from .history import (
    DelayFunctional,
    FieldState,
    HistorySegment,
    delayed_state,
    eta_rate_estimate,
    evaluate_eta,
)
from .model import IncidenceFn, ModelParams, incidence_dT, incidence_values
from .solver import InitialData, SolverConfig, Trajectory, run

__all__ = [
    "LOG_FLOOR",
    "volterra_v",
    "u_sdd_pointwise",
    "u_sdd_fields",
    "u_sdd_total",
    "c1_algebraic_fields",
    "c1_seven_v_fields",
    "LyapunovSample",
    "rate_decomposition",
    "monitor",
    "distance_to_equilibrium",
    "StabilityVerdict",
    "certify_local_stability",
]

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-30


def volterra_v(s: float) -> float:
    """v(s) = s - 1 - ln(s) on (0, inf); nonnegative, zero only at s = 1."""
    if not s > 0.0:
        raise ValueError(f"volterra_v: argument must be positive, got {s}")
    return s - 1.0 - math.log(s)


def _v(arr: np.ndarray) -> np.ndarray:
    """Vectorized Volterra function; the caller guarantees positivity."""
    return arr - 1.0 - np.log(arr)


def _adaptive_simpson(g, a: float, b: float, tol_abs: float, max_depth: int = 40) -> float:
    """Classic adaptive Simpson with Richardson correction."""
    if b == a:
        return 0.0

    def rec(x0, x2, f0, fm, f2, whole, tol, depth):
        x1 = 0.5 * (x0 + x2)
        lm = 0.5 * (x0 + x1)
        rm = 0.5 * (x1 + x2)
        flm = g(lm)
        frm = g(rm)
        left = (x1 - x0) / 6.0 * (f0 + 4.0 * flm + fm)
        right = (x2 - x1) / 6.0 * (fm + 4.0 * frm + f2)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return rec(x0, x1, f0, flm, fm, left, 0.5 * tol, depth + 1) + rec(
            x1, x2, fm, frm, f2, right, 0.5 * tol, depth + 1
        )

    m = 0.5 * (a + b)
    f0, fm, f2 = g(a), g(m), g(b)
    whole = (b - a) / 6.0 * (f0 + 4.0 * fm + f2)
    return rec(a, b, f0, fm, f2, whole, tol_abs, 0)


def _reciprocal_integrals(
    f: IncidenceFn,
    v_hat: float,
    t_hat: float,
    f_hat: float,
    T_values: np.ndarray,
    rel_tol: float = 1e-8,
) -> np.ndarray | None:
    """G(T_i) = int_{t_hat}^{T_i} f_hat / f(theta, v_hat) dtheta for every node.

    The reciprocal may be steep near theta = 0 for saturating kinds, so each
    stretch between consecutive sorted endpoints is integrated by adaptive
    Simpson and the signed values are recovered from the cumulative sums.
    Returns None (invalid sample) if any endpoint is nonpositive.
    """
    if t_hat <= 0.0 or np.any(T_values <= 0.0):
        return None

    def g(theta: float) -> float:
        return f_hat / float(incidence_values(f, theta, v_hat))

    pts = np.unique(np.concatenate(([t_hat], T_values)))
    cum = np.zeros(pts.size)
    for i in range(pts.size - 1):
        a, b = float(pts[i]), float(pts[i + 1])
        rough = abs(g(0.5 * (a + b))) * (b - a)
        cum[i + 1] = cum[i] + _adaptive_simpson(g, a, b, rel_tol * rough + 1e-300)
    base = cum[int(np.searchsorted(pts, t_hat))]
    idx = np.searchsorted(pts, T_values)
    return cum[idx] - base


def _window_states(seg: HistorySegment, t_lo: float) -> tuple[list[float], list[FieldState]]:
    """Snapshot nodes in (t_lo, t_now] plus the interpolated state at t_lo."""
    slack = 1e-9 * seg.dt
    nodes = [t_lo]
    vals = [seg.state_at(t_lo)]
    for t, s in zip(seg.times, seg.states):
        if t > t_lo + slack:
            nodes.append(t)
            vals.append(s)
    return nodes, vals


def _delay_term_fields(
    seg: HistorySegment,
    eta: float,
    f: IncidenceFn,
    f_hat: float,
    grid: Grid1D,
) -> tuple[np.ndarray | None, bool]:
    """Per-node trapezoid of v(f(T,V)/f_hat) over [t - eta, t]."""
    if eta <= 0.0:
        return np.zeros(grid.nx), True
    nodes, vals = _window_states(seg, seg.t_now - eta)
    weights = []
    for s in vals:
        ratio = incidence_values(f, s.T, s.V) / f_hat
        if np.any(ratio <= LOG_FLOOR):
            return None, False
        weights.append(_v(ratio))
    acc = np.zeros(grid.nx)
    for i in range(len(nodes) - 1):
        acc += 0.5 * (weights[i] + weights[i + 1]) * (nodes[i + 1] - nodes[i])
    return acc, True


def u_sdd_fields(
    seg: HistorySegment,
    eq: Equilibrium,
    params: ModelParams,
    f: IncidenceFn,
    df: DelayFunctional,
    grid: Grid1D,
    state_now: FieldState | None = None,
    eta: float | None = None,
    simpson_rel_tol: float = 1e-8,
) -> tuple[np.ndarray | None, bool]:
    """Pointwise functional over the grid, or (None, False) when a logarithm
    argument falls at or below the floor (sample invalidated, not clamped)."""
    state = state_now if state_now is not None else seg.state_now
    T_hat, Ts_hat, V_hat = eq.T_hat, eq.T_star_hat, eq.V_hat
    if min(T_hat, Ts_hat, V_hat) <= 0.0:
        return None, False
    f_hat = float(incidence_values(f, T_hat, V_hat))
    if f_hat <= 0.0:
        return None, False
    r2 = state.T_star / Ts_hat
    r3 = state.V / V_hat
    if np.any(r2 <= LOG_FLOOR) or np.any(r3 <= LOG_FLOOR):
        return None, False
    G = _reciprocal_integrals(f, V_hat, T_hat, f_hat, state.T, simpson_rel_tol)
    if G is None:
        return None, False
    emwh = math.exp(-params.omega * params.h_max)
    term1 = emwh * (state.T - T_hat - G)
    term2 = Ts_hat * _v(r2)
    term3 = (V_hat / params.burst_n) * _v(r3)
    eta_val = evaluate_eta(df, seg) if eta is None else eta
    tail, ok = _delay_term_fields(seg, eta_val, f, f_hat, grid)
    if not ok:
        return None, False
    return term1 + term2 + term3 + params.delta * Ts_hat * tail, True


def u_sdd_pointwise(
    state_now: FieldState,
    seg: HistorySegment,
    eq: Equilibrium,
    params: ModelParams,
    f: IncidenceFn,
    df: DelayFunctional,
    grid: Grid1D,
    node: int,
) -> float:
    """The functional at one grid node; raises on an invalid sample."""
    fields, ok = u_sdd_fields(seg, eq, params, f, df, grid, state_now=state_now)
    if not ok:
        raise ValueError("u_sdd_pointwise: sample invalid (logarithm argument at or below the floor)")
    return float(fields[node])


def u_sdd_total(
    seg: HistorySegment,
    eq: Equilibrium,
    params: ModelParams,
    f: IncidenceFn,
    df: DelayFunctional,
    grid: Grid1D,
    state_now: FieldState | None = None,
    eta: float | None = None,
) -> tuple[float, bool]:
    """Domain integral of the pointwise functional."""
    fields, ok = u_sdd_fields(seg, eq, params, f, df, grid, state_now=state_now, eta=eta)
    if not ok:
        return math.nan, False
    return integrate(grid, fields), True


def _ratio_arrays(state: FieldState, delayed: FieldState, eq: Equilibrium, f: IncidenceFn):
    """Shared ingredients of the rate terms; None when any floor is hit."""
    f_hat = float(incidence_values(f, eq.T_hat, eq.V_hat))
    fT = incidence_values(f, state.T, eq.V_hat)
    fTV = incidence_values(f, state.T, state.V)
    fdel = incidence_values(f, delayed.T, delayed.V)
    floors = (
        f_hat <= LOG_FLOOR
        or np.any(fT <= LOG_FLOOR)
        or np.any(fTV <= LOG_FLOOR)
        or np.any(fdel <= LOG_FLOOR)
        or np.any(state.T_star <= LOG_FLOOR)
        or np.any(state.V <= LOG_FLOOR)
    )
    if floors:
        return None
    return f_hat, fT, fTV, fdel


def c1_algebraic_fields(
    state: FieldState,
    delayed: FieldState,
    eq: Equilibrium,
    f: IncidenceFn,
) -> np.ndarray | None:
    """The collected cross-term in its raw three-product form."""
    parts = _ratio_arrays(state, delayed, eq, f)
    if parts is None:
        return None
    f_hat, fT, fTV, fdel = parts
    Ts_hat, V_hat = eq.T_star_hat, eq.V_hat
    p1 = (1.0 - f_hat / fT) * (1.0 - fTV / f_hat)
    p2 = (1.0 - Ts_hat / state.T_star) * (fdel / f_hat - state.T_star / Ts_hat)
    p3 = (1.0 - V_hat / state.V) * (state.T_star / Ts_hat - state.V / V_hat)
    return p1 + p2 + p3


def c1_seven_v_fields(
    state: FieldState,
    delayed: FieldState,
    eq: Equilibrium,
    f: IncidenceFn,
) -> np.ndarray | None:
    """The same cross-term rewritten as a signed sum of seven v-compositions.

    The rewrite inserts ln(1) = 0 split across seven logarithms; the two
    forms agree identically, which the monitor asserts sample by sample.
    """
    parts = _ratio_arrays(state, delayed, eq, f)
    if parts is None:
        return None
    f_hat, fT, fTV, fdel = parts
    Ts_hat, V_hat = eq.T_star_hat, eq.V_hat
    a1 = fTV / fT
    a2 = fdel / f_hat
    a3 = f_hat / fT
    a4 = fTV / f_hat
    a5 = fdel * Ts_hat / (f_hat * state.T_star)
    a6 = state.T_star * V_hat / (Ts_hat * state.V)
    a7 = state.V / V_hat
    for a in (a1, a2, a3, a4, a5, a6, a7):
        if np.any(a <= LOG_FLOOR):
            return None
    return _v(a1) + _v(a2) - _v(a3) - _v(a4) - _v(a5) - _v(a6) - _v(a7)


@dataclass(frozen=True)
class LyapunovSample:
    """One monitored instant: the functional, its rates, and the split."""

    t: float
    U: float
    dU_dt_fd: float
    S_int: float
    D_int: float
    Ddiff: float
    Ddiff_terms: tuple[float, float, float]
    C1_int: float
    c1_abs_dev: float
    c1_scale: float
    residual: float
    eta: float
    eta_rate: float
    valid: bool


def _invalid_sample(t: float, eta: float = math.nan, eta_rate: float = math.nan) -> LyapunovSample:
    nan = math.nan
    return LyapunovSample(t, nan, nan, nan, nan, nan, (nan, nan, nan), nan, nan, nan, nan, eta, eta_rate, False)


def rate_decomposition(
    traj: Trajectory,
    k: int,
    eq: Equilibrium,
    params: ModelParams,
    f: IncidenceFn,
    df: DelayFunctional,
    grid: Grid1D,
) -> LyapunovSample:
    """Central-difference rate of the functional at sample k plus its split.

    Needs the two neighboring samples for the central differences of U and
    of eta.  The decomposition residual |dU/dt - (A + B + Ddiff + dTs*S)| is
    the discretization health metric; each diffusion integral is computed
    in its gradient form and is nonpositive by construction.
    """
    if k < 1 or k + 1 >= len(traj):
        raise ValueError(f"rate_decomposition: need samples {k - 1}..{k + 1} in the trajectory")
    t_k = float(traj.times[k])
    seg_m = traj.segment_at(k - 1)
    seg_k = traj.segment_at(k)
    seg_p = traj.segment_at(k + 1)
    span = float(traj.times[k + 1] - traj.times[k - 1])

    eta_k = evaluate_eta(df, seg_k)
    eta_rate = eta_rate_estimate(df, seg_m, seg_p, span)

    U_m, ok_m = u_sdd_total(seg_m, eq, params, f, df, grid)
    U_k, ok_k = u_sdd_total(seg_k, eq, params, f, df, grid, eta=eta_k)
    U_p, ok_p = u_sdd_total(seg_p, eq, params, f, df, grid)
    if not (ok_m and ok_k and ok_p):
        return _invalid_sample(t_k, eta_k, eta_rate)
    dU = (U_p - U_m) / span

    state = traj.states[k]
    delayed = delayed_state(seg_k, eta_k)
    parts = _ratio_arrays(state, delayed, eq, f)
    if parts is None:
        return _invalid_sample(t_k, eta_k, eta_rate)
    f_hat, fT, fTV, fdel = parts
    T_hat, Ts_hat, V_hat = eq.T_hat, eq.T_star_hat, eq.V_hat
    emwh = math.exp(-params.omega * params.h_max)
    d1, d2, d3 = params.diff

    A = params.d * T_hat * emwh * integrate(grid, (1.0 - state.T / T_hat) * (1.0 - f_hat / fT))
    braces = (
        -_v(f_hat / fT)
        - _v(fdel * Ts_hat / (f_hat * state.T_star))
        - _v(state.T_star * V_hat / (Ts_hat * state.V))
        - (_v(state.V / V_hat) - _v(fTV / fT))
    )
    B = f_hat * emwh * integrate(grid, braces)

    g1 = g2 = g3 = 0.0
    if d1 != 0.0:
        gradT = gradient_central(grid, state.T)
        fp1 = incidence_dT(f, state.T, V_hat)
        g1 = -d1 * emwh * f_hat * integrate(grid, fp1 / (fT * fT) * gradT * gradT)
    if d2 != 0.0:
        gradTs = gradient_central(grid, state.T_star)
        g2 = -d2 * Ts_hat * integrate(grid, gradTs * gradTs / (state.T_star * state.T_star))
    if d3 != 0.0:
        gradV = gradient_central(grid, state.V)
        g3 = -d3 * (V_hat / params.burst_n) * integrate(grid, gradV * gradV / (state.V * state.V))
    Ddiff = g1 + g2 + g3

    dTs = params.delta * Ts_hat
    S_int = eta_rate * integrate(grid, _v(fdel / f_hat))
    D_int = -(A + B + Ddiff) / dTs
    residual = abs(dU - (A + B + Ddiff + dTs * S_int))

    c1_alg = c1_algebraic_fields(state, delayed, eq, f)
    c1_seven = c1_seven_v_fields(state, delayed, eq, f)
    if c1_alg is None or c1_seven is None:
        return _invalid_sample(t_k, eta_k, eta_rate)
    c1_abs_dev = float(np.max(np.abs(c1_alg - c1_seven)))
    c1_scale = float(max(np.max(np.abs(c1_alg)), np.max(np.abs(c1_seven))))

    return LyapunovSample(
        t=t_k,
        U=U_k,
        dU_dt_fd=dU,
        S_int=S_int,
        D_int=D_int,
        Ddiff=Ddiff,
        Ddiff_terms=(g1, g2, g3),
        C1_int=integrate(grid, c1_seven),
        c1_abs_dev=c1_abs_dev,
        c1_scale=c1_scale,
        residual=residual,
        eta=eta_k,
        eta_rate=eta_rate,
        valid=True,
    )


def monitor(
    traj: Trajectory,
    eq: Equilibrium,
    params: ModelParams,
    f: IncidenceFn,
    df: DelayFunctional,
    grid: Grid1D,
    stride: int = 10,
    warmup: float | None = None,
) -> list[LyapunovSample]:
    """Rate decompositions on a strided sample set after a warmup window.

    The warmup (default 2*h_max) skips the initial transient where the
    history is still the prescribed initial segment.
    """
    if len(traj) < 3:
        return []
    if warmup is None:
        warmup = 2.0 * params.h_max
    t0 = float(traj.times[0])
    # neighbors k-1 need a full trailing window of their own
    earliest = int(np.searchsorted(traj.times, t0 + params.h_max + traj.dt * (1.0 - 1e-9))) + 1
    start = max(int(np.searchsorted(traj.times, t0 + warmup)), earliest)
    return [
        rate_decomposition(traj, k, eq, params, f, df, grid)
        for k in range(start, len(traj) - 1, max(stride, 1))
    ]


def distance_to_equilibrium(state: FieldState, eq: Equilibrium, grid: Grid1D) -> float:
    """Root-mean-square distance of the triple from the equilibrium."""
    dev = (
        (state.T - eq.T_hat) ** 2
        + (state.T_star - eq.T_star_hat) ** 2
        + (state.V - eq.V_hat) ** 2
    )
    return math.sqrt(max(integrate(grid, dev) / grid.length, 0.0))


@dataclass(frozen=True)
class StabilityVerdict:
    """Empirical verdict for one perturbation size."""

    equilibrium: Equilibrium
    epsilon: float
    decrease_fraction: float
    n_valid: int
    n_samples: int
    max_eta_rate: float
    s_over_d: float
    initial_distance: float
    terminal_distance: float
    verdict: str  # stable_evidence | inconclusive | instability_evidence


def certify_local_stability(
    eq: Equilibrium,
    epsilons,
    params: ModelParams,
    f: IncidenceFn,
    df: DelayFunctional,
    cfg: SolverConfig,
    grid: Grid1D,
    directions=("constant", "gaussian_bump"),
    seed: int = 0,
    tol_decrease: float = 1e-8,
    stride: int = 10,
    warmup: float | None = None,
) -> list[StabilityVerdict]:
    """Perturb, run, monitor; one verdict per perturbation size.

    Per epsilon the equilibrium is displaced along every configured
    direction shape; the verdict aggregates the worst direction.  The
    stable_evidence verdict requires a decrease fraction of at least 0.99
    on valid samples and a terminal distance below the initial one (the
    0.99 gate is an engineering choice; the raw series are what to trust).
    Inconclusive is a legitimate outcome, as is instability_evidence for
    perturbations outside any stability region.
    """
    if eq.kind != "interior" or min(eq.T_hat, eq.T_star_hat, eq.V_hat) <= 0.0:
        raise ValueError("certify_local_stability: need a strictly interior equilibrium")
    rng = np.random.default_rng(seed)
    specs = []
    for name in directions:
        if name == "constant":
            specs.append(("constant", (1.0, 1.0, 1.0), None, None))
        elif name == "gaussian_bump":
            w = rng.normal(size=3)
            w /= np.linalg.norm(w)
            center = grid.x_min + (0.25 + 0.5 * rng.random()) * grid.length
            specs.append(("gaussian_bump", tuple(w), center, 0.1 * grid.length))
        else:
            raise ValueError(f"directions: unknown direction {name!r}")

    verdicts: list[StabilityVerdict] = []
    for eps in epsilons:
        frac_min = math.inf
        n_valid = n_samples = 0
        eta_max = 0.0
        ratio_max = 0.0
        worst_ratio = -math.inf
        dist_pair = (math.nan, math.nan)
        any_aborted = False
        all_contracted = True
        any_expanded_badly = False
        for name, w, center, width in specs:
            initial = InitialData(
                preset="equilibrium_perturbation",
                epsilon=float(eps),
                direction=name,
                weights=w,
                bump_center=center,
                bump_width=width,
                equilibrium=eq,
            )
            traj = run(initial, params, f, df, cfg, grid)
            if traj.aborted or len(traj) < 3:
                any_aborted = True
                frac_min = 0.0
                all_contracted = False
                continue
            d0 = distance_to_equilibrium(traj.states[0], eq, grid)
            d1 = distance_to_equilibrium(traj.states[-1], eq, grid)
            samples = monitor(traj, eq, params, f, df, grid, stride=stride, warmup=warmup)
            valid = [s for s in samples if s.valid]
            n_samples += len(samples)
            n_valid += len(valid)
            frac = (
                sum(1 for s in valid if s.dU_dt_fd <= tol_decrease) / len(valid)
                if valid
                else 0.0
            )
            frac_min = min(frac_min, frac)
            if valid:
                eta_max = max(eta_max, max(abs(s.eta_rate) for s in valid))
                max_s = max(abs(s.S_int) for s in valid)
                min_d = min(s.D_int for s in valid)
                ratio_max = max(ratio_max, max_s / min_d if min_d > 0.0 else math.inf)
            if d1 >= d0:
                all_contracted = False
            if d1 > d0 and frac < 0.9:
                any_expanded_badly = True
            ratio = d1 / d0 if d0 > 0.0 else math.inf
            if ratio > worst_ratio:
                worst_ratio = ratio
                dist_pair = (d0, d1)

        if frac_min is math.inf:
            frac_min = 0.0
        if any_aborted or n_valid == 0:
            verdict = "inconclusive"
        elif frac_min >= 0.99 and all_contracted:
            verdict = "stable_evidence"
        elif any_expanded_badly:
            verdict = "instability_evidence"
        else:
            verdict = "inconclusive"
        verdicts.append(
            StabilityVerdict(
                equilibrium=eq,
                epsilon=float(eps),
                decrease_fraction=frac_min,
                n_valid=n_valid,
                n_samples=n_samples,
                max_eta_rate=eta_max,
                s_over_d=ratio_max,
                initial_distance=dist_pair[0],
                terminal_distance=dist_pair[1],
                verdict=verdict,
            )
        )
    return verdicts
