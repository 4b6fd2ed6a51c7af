"""Figure regeneration over the rst-lab CSV/JSON exports.

All science lives upstream: these scripts only read the documented CSV
schemas, apply plotting transforms, and write deterministic images.  Nothing
here imports the simulation package.
"""

from rst_figures.render import FigureSpec, render

__all__ = ["FigureSpec", "render"]

__version__ = "0.1.0"
