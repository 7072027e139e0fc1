"""Trajectory scoring: interaction, anomaly and relevance of road-user situations."""

__version__ = "0.1.0"
