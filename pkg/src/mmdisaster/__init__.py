"""Gated cross-modal attention classifier for text + image + location records."""

__version__ = "0.1.0"
