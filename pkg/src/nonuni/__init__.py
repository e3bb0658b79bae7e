"""Percolation laboratory for nonunimodular transitive graphs."""

__version__ = "0.1.0"
