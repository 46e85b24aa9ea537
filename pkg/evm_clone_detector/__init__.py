"""
EVM clone detector.

Extracts functions from EVM bytecode, learns function embeddings with a
paragraph-vector model over instruction tokens, and reports clones of known
vulnerable contracts.
"""

__version__ = "0.1.0"
