"""Spectral simulation and control synthesis for quantum control at the boundary."""

__version__ = "0.1.0"
