import os
import sys

import numpy as np

# Add project root to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from rigfix.gating import GateConfig
from rigfix.pipeline import run_batch, simulate_fixtures, solve_and_gate
from rigfix.simulator import SimConfig
from rigfix.solver import SolverConfig


def verify_recovery(count: int = 20):
    """
    Solves noisy, outlier-contaminated scenarios and reports the worst angle and
    focal-drift errors against the generating truth.
    """
    print(f"Solving {count} scenarios (sigma 0.2 px, 30% outliers)...")
    cfg = SimConfig(num_points=500, noise_sigma_px=0.2, outlier_rate=0.3, seed=1)
    worst_deg, worst_df = 0.0, 0.0
    for fixture in simulate_fixtures(cfg, count, linearized=True):
        outcome = solve_and_gate(fixture.matches, SolverConfig(), GateConfig())
        if outcome.solution is None:
            print(f"  {fixture.name}: {outcome.error}")
            continue
        sol, truth = outcome.solution, fixture.truth
        err = np.degrees(np.abs(sol.d_omega.as_array() - truth.true_d_omega.as_array())).max()
        worst_deg = max(worst_deg, float(err))
        worst_df = max(worst_df, abs(sol.d_f - truth.true_df))
    print(f"  worst |d_omega error| = {worst_deg:.4f} deg, worst |d_f error| = {worst_df:.2e}")


def verify_model_comparison(count: int = 50):
    print(f"\nComparing models over {count} drifting scenarios...")
    cfg = SimConfig(num_points=500, d_omega_max_deg=0.5, df_max=0.01, noise_sigma_px=0.2, seed=100)
    _, table = run_batch(cfg, count)
    print(table.to_string(index=False))


if __name__ == "__main__":
    verify_recovery()
    verify_model_comparison()
