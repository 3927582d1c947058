"""Averaging process on the complete graph and torus, its limit equations, and cross-checks."""

__version__ = "0.1.0"
