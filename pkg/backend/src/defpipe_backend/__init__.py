"""Neural backend for the definition pipeline wire protocol."""

__version__ = "0.1.0"
