"""Formal solid-geometry toolkit: CDL language, theorem knowledge base,
forward-chaining solver, face-set solids, parse metrics and model gateway."""

__version__ = "0.1.0"
