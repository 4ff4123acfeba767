"""Kolmogorov-type extension of consistent POVM families, at desk scale."""

__version__ = "0.1.0"
