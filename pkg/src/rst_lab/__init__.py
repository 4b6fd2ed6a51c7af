"""Simulation and verification laboratory for the radial spanning tree (RST).

The RST links every point of a homogeneous Poisson process to its nearest
neighbor that lies strictly closer to the origin.  This package provides
exact tree construction over finite windows, an instrumented exploration
process with renewal bookkeeping, Monte Carlo tail estimators, and fuzz
harnesses for the deterministic geometric lemmas the analysis rests on.
"""

from rst_lab.geom import (
    Cone,
    Lens,
    alpha,
    ball_volume,
    check_flatness_bound,
    check_radial_progress,
    empty_ball_witness,
    lens_contains,
    perp_component,
    reflect_in_ball,
)
from rst_lab.ppp import LazyField, PointSet, RegionSpec, realize_cells, resample_region, sample_ball
from rst_lab.rst_core import (
    RstTree,
    build_rst,
    check_planarity,
    in_degree_histogram,
    psi,
    straightness_profile,
)
from rst_lab.exploration import (
    Constants,
    EventTrace,
    deviation_sup,
    explore,
    pi_up,
    renewal_increments,
    run_coupling,
)

__all__ = [
    "Cone",
    "Lens",
    "alpha",
    "ball_volume",
    "check_flatness_bound",
    "check_radial_progress",
    "empty_ball_witness",
    "lens_contains",
    "perp_component",
    "reflect_in_ball",
    "LazyField",
    "PointSet",
    "RegionSpec",
    "realize_cells",
    "resample_region",
    "sample_ball",
    "RstTree",
    "build_rst",
    "check_planarity",
    "in_degree_histogram",
    "psi",
    "straightness_profile",
    "Constants",
    "EventTrace",
    "deviation_sup",
    "explore",
    "pi_up",
    "renewal_increments",
    "run_coupling",
]

__version__ = "0.1.0"
