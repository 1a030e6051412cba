"""Numerical models of Z/2 harmonic functions on the sphere with symmetric branch sets."""

__version__ = "0.1.0"
