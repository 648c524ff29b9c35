"""Parallel multi-stage MIMO FBMC/OQAM transceivers: signal chain and distortion analysis."""

__version__ = "0.1.0"
