"""Optomechanical crystal cavity cooling, bath inference, counting simulation and design search."""

__version__ = "0.1.0"
