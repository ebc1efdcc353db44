"""Meshfree mimetic divergence operators and a virtual finite-volume solver."""

__version__ = "0.1.0"
