#!/usr/bin/env python3
"""Sweep the perturbation size and record how the delay rate shrinks.

For the integral state-dependent delay, |d(eta)/dt| along a solution near
the equilibrium is bounded by a constant that vanishes with the
perturbation size; the sign-indefinite Lyapunov term S inherits that
smallness against the dissipative term D.  This script prints both per
epsilon so the trend is visible at a glance.

Usage: python scripts/eta_rate_sweep.py [--eps-fractions 0.1 0.05 0.025]
"""

import argparse

from sddlab import (
    Grid1D,
    IncidenceFn,
    ModelParams,
    SolverConfig,
    certify_local_stability,
    equilibrium_norm,
    find_equilibria,
    integral_delay,
    state_mean_reducer,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps-fractions", nargs="+", type=float, default=[0.2, 0.1, 0.05, 0.025, 0.0125])
    ap.add_argument("--t-end", type=float, default=6.0)
    ap.add_argument("--eta-at-equilibrium", type=float, default=0.4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    params = ModelParams(
        lam=10.0, d=0.1, delta=0.5, burst_n=10.0, c=5.0, omega=0.0, h_max=1.0, diff=(1e-3, 1e-3, 2e-3)
    )
    f = IncidenceFn("saturated", k=0.1, k2=0.1)
    grid = Grid1D(0.0, 1.0, 41)
    eq = find_equilibria(params, f)[1]
    scale = args.eta_at_equilibrium / eq.V_hat
    df = integral_delay(params.h_max, state_mean_reducer(grid, "V", scale))
    cfg = SolverConfig(dt=1e-2, t_end=args.t_end)

    norm = equilibrium_norm(eq)
    print(f"equilibrium ({eq.T_hat:.4f}, {eq.T_star_hat:.4f}, {eq.V_hat:.4f}), |eq| = {norm:.4f}")
    print(f"{'eps/|eq|':>10} {'max|deta/dt|':>14} {'max|S|/min D':>14} {'decrease':>10} {'verdict':>22}")
    verdicts = certify_local_stability(
        eq,
        [frac * norm for frac in args.eps_fractions],
        params,
        f,
        df,
        cfg,
        grid,
        seed=args.seed,
        stride=5,
    )
    for frac, v in zip(args.eps_fractions, verdicts):
        print(
            f"{frac:>10.4f} {v.max_eta_rate:>14.3e} {v.s_over_d:>14.3e} "
            f"{v.decrease_fraction:>10.4f} {v.verdict:>22}"
        )


if __name__ == "__main__":
    main()
