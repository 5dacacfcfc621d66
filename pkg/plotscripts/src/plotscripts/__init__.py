"""Plotting companion for exported learning-curve CSVs."""

__version__ = "0.1.0"
