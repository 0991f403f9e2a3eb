"""Numerical laboratory for the 2D Lane-Emden problem at large exponents."""

__version__ = "0.1.0"
