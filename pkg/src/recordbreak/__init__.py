"""Bayesian spatio-temporal models for calendar-day temperature records."""
__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: F401
