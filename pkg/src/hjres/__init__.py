"""Residual minimisation for monotone Hamilton-Jacobi schemes."""

__version__ = "0.1.0"
