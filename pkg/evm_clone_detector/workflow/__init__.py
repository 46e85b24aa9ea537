"""Detection pipeline."""
