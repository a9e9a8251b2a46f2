"""Deep time-series forecasting, refrigeration load shedding and feature-space
adaptation tools built on numpy."""

__version__ = "0.1.0"
