"""Numerical laboratory for Q-curvature and the Paneitz operator on flat tori."""

__version__ = "0.1.0"
