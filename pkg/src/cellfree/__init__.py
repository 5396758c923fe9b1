"""Downlink cell-free mmWave massive MIMO with fronthaul compression and low-resolution DACs."""

__version__ = "0.1.0"
