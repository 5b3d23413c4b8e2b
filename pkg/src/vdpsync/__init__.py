"""Topological synchronization of van der Pol oscillator lattices.

Subpackages cover lattice construction, mean-field dynamics, Gaussian
quantum fluctuations, synchronization measures, spectral analysis, exact
small-system Lindblad references, and a batch runner with a CLI.
"""

__version__ = "0.1.0"

from . import exactquantum, fluctuations, lattice, measures, meanfield, spectral  # noqa: F401
