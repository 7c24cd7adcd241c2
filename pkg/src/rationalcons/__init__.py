"""Crash-tolerant consensus that colluding rational agents cannot game."""

__version__ = "0.1.0"
