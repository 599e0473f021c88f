"""Numerical laboratory for supersonic potential flow with cavitation."""

__version__ = "0.1.0"
