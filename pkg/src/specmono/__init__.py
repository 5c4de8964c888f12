"""Spectral monodromy of weakly non-selfadjoint two-degree-of-freedom operators.

Modules: ``symbolcalc`` (Moyal calculus on formal series), ``birkhoff``
(normal form over a Diophantine torus), ``quantize`` (model systems, good
rectangles and synthetic spectra), ``latticemono`` (chart fitting, cocycle,
holonomy), ``classical`` (period lattice and classical monodromy) and ``cli``.
"""

__version__ = "0.1.0"
