"""Domain data models and exceptions."""
