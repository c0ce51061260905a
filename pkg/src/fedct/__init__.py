"""Federated co-training laboratory."""

__version__ = "0.1.0"
