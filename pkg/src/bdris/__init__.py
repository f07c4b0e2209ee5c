"""Simulation toolkit for frequency-selective and beyond-diagonal RIS networks."""

__version__ = "0.1.0"
