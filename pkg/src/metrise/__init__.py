"""Metrisability tests for projective structures on surfaces.

The package decides, numerically, whether the unparametrised geodesics
of a second-order ODE in the plane are those of some Riemannian metric,
and provides the sphere-side machinery (transported matrix solutions on
the unit tangent bundle, great-circle residuals) used to manufacture
certified examples.
"""

__version__ = "0.1.0"
