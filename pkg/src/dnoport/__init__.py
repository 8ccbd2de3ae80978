"""Cardinality-constrained mean-variance portfolio search with exact capital allocation."""

__version__ = "0.1.0"
