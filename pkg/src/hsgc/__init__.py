"""Hyperspectral superpixel graph classification."""

__version__ = "0.1.0"
