"""Curvature functionals and integral inequalities on hypersurfaces of space forms."""
