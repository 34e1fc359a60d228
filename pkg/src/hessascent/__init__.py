"""Desk-scale numerics for Hessian ascent on mixed spherical spin glasses."""

__version__ = "0.1.0"
