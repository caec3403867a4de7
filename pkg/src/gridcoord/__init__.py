"""Hierarchical transmission/distribution coordination on convex grid models."""

__version__ = "0.1.0"
