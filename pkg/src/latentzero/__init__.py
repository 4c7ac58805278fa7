"""Desk-scale MuZero lab with observation reconstruction and latent-state diagnostics."""

__version__ = "0.1.0"
