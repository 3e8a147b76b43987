"""Numerical laboratory for second-eigenvector statistics of random regular graphs."""

__version__ = "0.1.0"
