"""Larmor-clock measurement of tunnelling and reflection times on a square barrier."""

__version__ = "0.1.0"
