"""Workbench for sampling, repairing and validating financial correlation matrices."""

__version__ = "0.1.0"
