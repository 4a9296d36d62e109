"""Gradient-based learning in continuous games: equilibria, dynamics, LQ games."""

__version__ = "0.1.0"
