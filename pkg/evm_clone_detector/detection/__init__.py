"""Clone retrieval, label propagation and evaluation."""
