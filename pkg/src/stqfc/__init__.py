"""Simulation and pump optimization for spatio-temporal mode-selective
sum-frequency generation in a quasi-phase-matched crystal."""

__version__ = "0.1.0"
