"""Walk the parent chain from a far start and watch the bookkeeping.

The trace records, per step, the radius R, the innermost reach r of the
history of forced-empty lenses, the width L = R - r, good steps, and
pseudo-renewal flags.

Run:  python demos/02_exploration_trace.py
"""

from pathlib import Path

import numpy as np

from rst_lab import Constants, explore
from rst_lab.exploration import renewal_increments, write_trace_csv
from rst_lab.ppp import LazyField

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# Lazy field: only the cells the walk actually touches get realized.
field = LazyField(dimension=2, global_seed=7)
constants = Constants(kappa=1.05, lam=0.25)  # renewal-friendly constants
pi0 = np.array([120.0, 0.0])

path, trace = explore(pi0, field, constants)
print(f"{trace.n_steps} steps from ||pi0|| = 120 to the origin")
print(f"terminal time theta = {trace.theta}, good steps = {trace.tau[:8]}...")
print(f"renewal times w = {trace.w}")

blocks = renewal_increments(trace, path)
for b in blocks[:5]:
    print(
        f"block {b.block}: steps [{b.w_start}, {b.w_end}], radial {b.radial:+.2f}, "
        f"path length {b.block_length:.2f}"
    )

write_trace_csv(out / "trace.csv", path, trace)
print(f"wrote {out / 'trace.csv'}")
