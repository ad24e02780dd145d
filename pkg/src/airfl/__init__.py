"""Movable-antenna federated learning with over-the-air gradient aggregation."""

__version__ = "0.1.0"
