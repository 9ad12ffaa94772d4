"""Sweep harmonic fields on tet meshes and their PL critical points."""

__version__ = "0.1.0"
