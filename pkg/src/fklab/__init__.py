"""Determinant approximation and entropy toolkit for integral group rings."""

__version__ = "0.1.0"
