"""Test modules for bctomo."""
