"""The symmetry coupling: reflect the world at a renewal, rerun, compare.

At the first decomposition time the configuration inside the ball
B(0, ||pi_up||) is reflected through the axis of the current position.
The rerun must reproduce the original path exactly up to the renewal and
negate every orthogonal component afterwards.

Run:  python demos/05_reflection_coupling.py
"""

import numpy as np

from rst_lab.exploration import Constants, run_coupling
from rst_lab.experiments import run_symmetry_campaign

constants = Constants(kappa=1.05, lam=0.25)

seed = 0
rep = None
while True:
    seed += 1
    rep = run_coupling(np.array([100.0, 0.0]), seed=seed, constants=constants)
    if rep.outcome == "ok":
        break
print(f"seed {seed}: renewal at step {rep.w1}, next at {rep.w2}")
print(f"prefix exact: {rep.prefix_exact}")
print(f"negation error at the matched renewal: {rep.negation_error:.3e}")
print(f"max negation error over the whole tail: {rep.max_tail_negation_error:.3e}")

# Across many runs the signed orthogonal increment is symmetric.
campaign = run_symmetry_campaign(2, 80.0, trials=150, seed=5, min_applicable=25)
print(
    f"campaign: {campaign.applicable} applicable of {campaign.trials}, "
    f"sign-test p = {campaign.sign_test_p:.3f}, "
    f"mean first coordinate = {campaign.mean_first_coord:+.3f}"
)
