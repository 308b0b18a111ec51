"""Numerical workbench for the stochastic Allen-Cahn / Navier-Stokes channel with slip boundary control."""

__version__ = "0.1.0"
