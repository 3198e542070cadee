"""Multi-queue housing allocation simulator with policy search."""

__version__ = "0.1.0"
