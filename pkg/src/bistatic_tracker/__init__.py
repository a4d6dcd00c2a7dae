"""Passive bistatic Doppler tracking with two receivers."""

__version__ = "0.1.0"
