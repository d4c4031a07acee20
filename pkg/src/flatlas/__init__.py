"""Flatness analysis of control-affine systems at generic and degenerate points."""

__version__ = "0.1.0"
