"""Sparse JL sketches, restricted-isometry measurement, parameter recipes and sketched least squares."""

__version__ = "0.1.0"
