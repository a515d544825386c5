"""Trace-hook execution harness for Python repair targets."""

__version__ = "0.1.0"
