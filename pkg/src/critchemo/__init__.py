"""Radial numerics for the energy-critical two-species chemotaxis system."""

__version__ = "0.1.0"
