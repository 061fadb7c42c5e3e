"""Influence-augmented online planning: simulators, influence learning and POMCP."""

__version__ = "0.1.0"
