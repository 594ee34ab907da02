"""Counterdiabatic ground-state exploration of the honeycomb Fermi-Hubbard model."""

__version__ = "0.1.0"
