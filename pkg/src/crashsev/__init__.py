"""Crash severity hotspot analysis and random-parameter ordered probit models."""

__version__ = "0.1.0"
