"""Multi-view mesh refinement from RGB and angle-of-polarization images."""

__version__ = "0.1.0"
