"""Dimension invariants, wave cones and blow-up diagnostics for first-order PDE-constrained measures."""

__version__ = "0.1.0"
