"""Numerical laboratory for singularities of Lax-Oleinik evolutions and their retraction flows."""

__version__ = "0.1.0"
