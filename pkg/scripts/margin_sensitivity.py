#!/usr/bin/env python3
"""Sensitivity of the safety-distance verdict to the reach-program
feasibility margin.

The platoon model carries an exact unit eigenvalue (the predecessor-velocity
integrator), so every reach certificate is feasible only up to a small
interior margin.  The certified shape in the marginal directions scales with
that margin, and the distance verdict inherits the dependence.  This script
sweeps the margin for the baseline design and prints both distance
conventions per margin.
"""

import argparse

import numpy as np

from platoon_shield import assessment, config, fixtures, synthesis
from platoon_shield.model import build_plant


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--margins", type=float, nargs="+",
                    default=[0.0, 1e-8, 1e-7, 2e-7, 5e-7])
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    cfg = config.load(fixtures.case_study_config_path())
    plant = build_plant(cfg.vehicle)
    base = fixtures.baseline_design()
    grid = cfg.synthesis.reach_a_grid

    print(f"{'margin':>10} {'a_err':>8} {'a_zeta':>8} {'d_formula':>12} "
          f"{'d_oracle':>12} {'worst_eig':>10}")
    for margin in args.margins:
        try:
            P_e, a_err, alpha_e, _ = synthesis.error_reach_given_design(
                plant, cfg.bounds, base["L"], base["Pi"], a_grid=grid,
                refinement_rounds=0, psd_margin=margin, threads=args.threads)
            reach, P_x, verdict = assessment.assess_design(
                plant, cfg.bounds, base["K"], base["Pi"], P_e, alpha_e,
                a_grid=grid, refinement_rounds=0, psd_margin=margin,
                threads=args.threads)
        except synthesis.InfeasibleSynthesisError:
            print(f"{margin:>10.1e} {'-':>8} {'-':>8} {'infeasible':>12}")
            continue
        print(f"{margin:>10.1e} {a_err:>8.4f} {reach.a:>8.4f} "
              f"{verdict.d_inf:>12.4g} {verdict.d_inf_oracle:>12.4g} "
              f"{reach.verification.worst():>10.1e}")


if __name__ == "__main__":
    main()
