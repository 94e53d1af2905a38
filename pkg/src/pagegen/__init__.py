"""Divide-and-conquer screenshot-to-HTML generation toolkit."""

__version__ = "0.1.0"
