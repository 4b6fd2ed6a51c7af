"""Monte Carlo tails: single-step bound, deviation scaling, spacing laws.

Small trial counts keep this quick; bump them for smoother curves.

Run:  python demos/03_tail_experiments.py
"""

import numpy as np

from rst_lab.experiments import (
    estimate_deviation_tail,
    estimate_psi_tail,
    estimate_spacing_tails,
)
from rst_lab.exploration import Constants

# Empirical survival of the step length vs the analytic bound.
est = estimate_psi_tail(d=2, x_norm=10.0, thresholds=[0.5, 1.0, 2.0], trials=2000, seed=1)
for t, s, b in zip(est.thresholds, est.survival, est.meta["bound"]):
    print(f"P(step > {t:3.1f}) = {s:.4f}   bound {b:.4f}")

# Transverse deviation of the walk grows like sqrt of the start norm.
rep = estimate_deviation_tail(d=2, start_norms=[25, 50, 100], epsilon=0.25, trials=120, seed=2)
print("median deviations:", np.round(rep.median_dev, 2), " log-log slope:", round(rep.slope, 3))

# Good-step gaps and the terminal radius under the default constants.
sp = estimate_spacing_tails(d=2, start_norm=100.0, constants=Constants(), trials=500, seed=3)
print("tau-gap survival at k=1..6:", np.round(sp.tau_gaps.survival[1:7], 3))
print("terminal-radius shape correlation:", round(sp.r_theta_shape_corr, 3))
