"""Bytecode decoding, extraction and input file parsers."""
