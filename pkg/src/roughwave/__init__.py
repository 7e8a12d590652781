"""Numerical laboratory for 1D Schrodinger evolution with rough oscillatory potentials."""

__version__ = "0.1.0"
