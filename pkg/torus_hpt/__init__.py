"""Homotopy random variables and fluid data on the flat 3-torus."""

__version__ = "0.3.0"
