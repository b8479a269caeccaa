"""Hitting-time statistics for mixing symbolic systems and the doubling map."""

__version__ = "0.1.0"
