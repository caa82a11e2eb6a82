"""Geo-temporal tag statistics and learned query expansion."""

__version__ = "0.1.0"
