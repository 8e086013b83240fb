"""Stochastic hybrid stress finite elements for plane elasticity with random coefficients."""

__version__ = "0.1.0"
