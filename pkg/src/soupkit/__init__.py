"""Checkpoint souping and check-worthiness classification toolkit."""

__version__ = "0.1.0"
