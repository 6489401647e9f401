"""Simulation toolkit for randomized benchmarking under realistic noise."""

__version__ = "0.1.0"
