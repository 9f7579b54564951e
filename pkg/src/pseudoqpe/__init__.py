"""Resource estimates for first-quantized plane-wave simulation with GTH pseudopotentials."""

__version__ = "0.1.0"
