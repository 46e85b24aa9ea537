"""Logging, configuration, reporting and synthetic data utilities."""
