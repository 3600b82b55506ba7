"""Asynchronous distributed learning from logic constraints (ASYMM)."""

__version__ = "0.1.0"
