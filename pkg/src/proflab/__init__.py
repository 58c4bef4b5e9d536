"""Finite-level computations with profinite actions of arithmetic groups."""

__version__ = "0.1.0"
