"""Practical DPG for the 2D Poisson problem with discontinuous trace spaces."""

__version__ = "0.1.0"
