"""Robustness quantifiers and discrimination games for distributed measurements."""

__version__ = "0.3.0"
