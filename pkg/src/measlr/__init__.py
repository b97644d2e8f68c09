"""Simulation and bound auditing for measurement-and-feedback quantum circuits."""

__version__ = "0.1.0"
