"""Pseudospectral simulation and diagnostics for Wick-renormalized stochastic
beam equations on the torus."""

__version__ = "0.1.0"
