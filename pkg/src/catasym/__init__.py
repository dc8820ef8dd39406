"""Exact model CAT(0)/CAT(1) spaces and verification of asymptotic regularity results."""

__version__ = "0.1.0"
