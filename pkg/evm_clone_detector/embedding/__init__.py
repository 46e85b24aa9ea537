"""Vocabulary, embedding model, training, inference and persistence."""
