"""Unified facial landmark detection across heterogeneous annotation schemes."""

__version__ = "0.1.0"
