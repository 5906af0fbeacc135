"""Finite-size networks with random delays and their Gaussian mean-field limit."""

__version__ = "0.1.0"
