"""Magnetic gauge reduction and tunneling asymptotics for 2x2 periodic operators."""

__version__ = "0.1.0"
