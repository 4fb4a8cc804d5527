"""Desk-scale laboratory for posterior-mean rectified flow image restoration."""

__version__ = "0.1.0"
