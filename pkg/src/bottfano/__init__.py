"""Exact toric toolkit for generalized Bott towers and maximal log Fano pairs."""

__version__ = "0.1.0"
