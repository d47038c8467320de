"""Semiclassical Dirac dynamics near a mass interface: solver, normal form, phase-space diagnostics."""

__version__ = "0.1.0"
