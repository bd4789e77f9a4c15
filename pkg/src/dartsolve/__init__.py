"""Dart skill models and equilibrium strategy analysis for the game 501."""

__version__ = "0.1.0"
