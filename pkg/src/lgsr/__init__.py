"""Landmark-guided segment routing for LEO satellite grids."""

__version__ = "0.1.0"
