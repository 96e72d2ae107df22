"""Covert communication over AWGN channels: detectability measures, power limits and skew-normal frontiers."""

__version__ = "0.1.0"
