"""Hierarchical RL with multi-horizon skill CVAEs and a gated manager."""

__version__ = "0.1.0"
