"""Numerical toolkit for degenerate anisotropic energies on Q-valued graphs.

Subpackages by role: exterior (exact 2-vector algebra in R^4), construction
(the explicit three-atom objects and their verification), multipoint
(Q-points and the matching metric), gmeasures (atomic Grassmannian measures
and transport), currents (triangulated 2-currents and graph generators),
energy (the degenerate integrand and the envelope bracket), approx
(interpolation and piecewise-affine approximation), cli (command line).
"""

__version__ = "0.1.0"
