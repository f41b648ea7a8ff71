"""Numerical toolkit for Lorentz-Finsler spacetimes and the Penrose pipeline."""

__version__ = "0.1.0"
