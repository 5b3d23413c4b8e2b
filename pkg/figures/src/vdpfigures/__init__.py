"""Figure rendering for vdpsync batch artifacts.

Reads the documented CSV/JSON contracts produced by the simulation runner
and renders paper-style panels; never recomputes any physics.  Color
scales and layouts mimic the reference figures qualitatively, with no
pixel-parity goal.
"""

__version__ = "0.1.0"

from .recipe import ArtifactError, FigureRecipe, render  # noqa: F401
