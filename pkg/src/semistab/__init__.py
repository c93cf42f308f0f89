"""Numerical laboratory for Lyapunov stability of positive semigroups."""

__version__ = "0.1.0"
