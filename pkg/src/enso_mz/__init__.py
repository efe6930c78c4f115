"""Delay-equation reductions of the two-strip ENSO model."""

__version__ = "0.1.0"
