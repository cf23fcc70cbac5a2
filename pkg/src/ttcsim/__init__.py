"""Fully digital PTP-style time distribution over a TTC-like serial link."""

__version__ = "0.1.0"
