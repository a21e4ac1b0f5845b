"""Simulation and verification lab for the range tree of a near-critical
biased random walk on the infinite ordered tree."""

__version__ = "0.1.0"
