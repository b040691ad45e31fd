"""Shared helpers for edgeband components (logging, metrics, settings, schemas)."""
