"""Predicting performance regressions from code changes."""

__version__ = "0.1.0"
