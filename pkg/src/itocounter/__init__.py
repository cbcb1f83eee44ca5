"""Numerics for the normal-to-t2 quantile transform and Ito-integrability checks on Wiener paths."""

__version__ = "0.1.0"
