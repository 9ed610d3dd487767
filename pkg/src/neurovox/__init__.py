"""Speech reconstruction from multi-channel neural-style signals."""

__version__ = "0.1.0"
