"""Broken Pontryagin extremals for control-affine systems with ball-valued controls."""

__version__ = "0.1.0"
