"""Reconstruction experiments on sparse random graphs and their tree limits."""

__version__ = "0.1.0"
