"""Photon statistics of driven cavity-QED systems: exact and effective models."""

__version__ = "0.1.0"
