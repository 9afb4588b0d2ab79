"""Automated data analyst: question + SQLite db -> chart + bullet analysis."""

__version__ = "0.1.0"
