"""Boundary forms, harmonic targets, controls and density recovery."""
