"""Sample a Poisson ball, build the radial spanning tree, inspect it.

Run:  python demos/01_build_a_tree.py
"""

from pathlib import Path

import numpy as np

from rst_lab import build_rst, in_degree_histogram, check_planarity, sample_ball

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

points = sample_ball(d=2, radius=25.0, seed=42)
print(f"sampled {len(points)} points in B(0, 25)")

tree = build_rst(points)
tree.validate()
print("tree valid: parents strictly closer to the origin, connected, acyclic")

hist = in_degree_histogram(tree)
print("in-degree histogram:", dict(sorted(hist.items())))
print("edge crossings (must be empty in d=2):", check_planarity(tree))

points.to_csv(out / "points.csv")
tree.to_csv(out / "tree.csv")
print(f"wrote {out / 'points.csv'} and {out / 'tree.csv'}")

# parents always have strictly smaller norm
norms = points.norms()
pidx = tree.parent_index()
parent_norms = np.where(pidx < 0, 0.0, norms[np.clip(pidx, 0, None)])
print("max parent/child norm ratio:", float((parent_norms / norms).max()))
