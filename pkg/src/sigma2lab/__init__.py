"""Numerical laboratory for entire 2-convex solutions of sigma_2(D^2 u) = 1."""

__version__ = "0.1.0"
