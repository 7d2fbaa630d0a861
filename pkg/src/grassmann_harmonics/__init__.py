"""Harmonic analysis on the Grassmann manifold SU(r, r+b)/S(U(r) x U(r+b))."""

__version__ = "0.1.0"
