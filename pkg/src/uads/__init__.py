"""Toolkit for diagnosing audio representations used in anomaly detection
under domain shift: feature extraction, 2D projection, dual scatter plots,
and separability / support metrics."""

__version__ = "0.1.0"
