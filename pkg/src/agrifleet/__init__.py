"""Multi-UAV precision-agriculture mission engine."""

__version__ = "0.1.0"
