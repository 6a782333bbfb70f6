"""kakeya-lab: tube/cube configurations and low-degree polynomial surgery in R^3.

The package is organized around one experiment loop:

* build a configuration of unit cubes and radius-1 tubes (``geometry``),
* fit a low-degree polynomial that vanishes on points or is mean-zero on
  cells (``cutting``), and check that its zero set "cuts" cubes,
* measure the zero set: axis shadows of tube segments (``vanishing``),
  Monte Carlo surface area (``crofton``), curvature and straight
  directions (``surfgeom``),
* run the degree-reduction experiment end to end (``degred``) and collect
  planiness/graininess statistics (``grainy``).

Everything randomized takes an integer seed and draws from named
sub-streams (``seeding``), so reports are reproducible byte for byte.
"""

from kakeya_lab.poly3 import Poly1, Poly3, count_real_roots, dim_poly_space

__all__ = [
    "Poly1",
    "Poly3",
    "count_real_roots",
    "dim_poly_space",
    "__version__",
]

__version__ = "0.1.0"
