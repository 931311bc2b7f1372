"""Reliable profile matching across social networks."""

__version__ = "0.1.0"
