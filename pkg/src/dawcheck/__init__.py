"""Workflow runs checked against validity constraints."""

__version__ = "0.1.0"
