"""Adaptive CUSUM monitoring of bivariate time-between-events data."""

__version__ = "0.1.0"
