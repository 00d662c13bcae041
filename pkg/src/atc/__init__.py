"""Numerical construction of ATC points from Hilbert modular forms over Q(sqrt2)."""

__version__ = "0.1.0"
