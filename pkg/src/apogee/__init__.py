"""Amortized inference of drag coefficient and thrust factor for model rockets."""

__version__ = "0.1.0"
