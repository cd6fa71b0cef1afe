"""Numerical laboratory for a three dimensional steady boundary-layer system."""

__version__ = "0.1.0"
