"""Monocular model-based edge tracking against a known wireframe."""
__version__ = "0.1.0"
