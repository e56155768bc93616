"""Definition pipeline: extract, rank, and generate definitions of technical terms."""

__version__ = "0.1.0"
