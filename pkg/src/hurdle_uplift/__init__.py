"""Profit-aware uplift targeting with causal hurdle models."""

__version__ = "0.1.0"
