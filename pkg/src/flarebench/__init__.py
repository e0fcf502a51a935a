"""Magnetogram patch preprocessing and flare forecast verification."""

__version__ = "0.1.0"
