"""
Exceptions raised by the EVM clone detector.

Library code raises these; only the command-line layer turns them into exit codes.
"""

from typing import Optional


class EvmCloneDetectorError(Exception):
    """Base class for every error raised by this package."""


class BytecodeFormatError(EvmCloneDetectorError):
    """Bytecode text could not be decoded as hexadecimal."""


class SchemaError(EvmCloneDetectorError):
    """An extraction schema document is missing a field or is wrongly nested."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"schema error at {path}: {message}")


class LabelError(EvmCloneDetectorError):
    """A labels CSV row is malformed or names a tag outside the taxonomy."""

    def __init__(self, message: str, row: Optional[int] = None, tag: Optional[str] = None):
        self.row = row
        self.tag = tag
        super().__init__(message)


class EmptyCorpusError(EvmCloneDetectorError):
    """There is nothing to learn from."""


class TrainingDivergedError(EvmCloneDetectorError):
    """A non-finite loss was produced during training."""

    def __init__(self, step: int, function: str, loss: float):
        self.step = step
        self.function = function
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at step {step} (function {function})")


class ModelFormatError(EvmCloneDetectorError):
    """A model file has the wrong magic, an unsupported version, or is truncated."""


class ConfigError(EvmCloneDetectorError):
    """Invalid run configuration."""


class DimensionMismatchError(EvmCloneDetectorError, ValueError):
    """Two vectors that must share a dimension do not."""


class EvaluationError(EvmCloneDetectorError):
    """Cross-validation cannot be run on the given corpus."""


class DuplicateFunctionError(EvmCloneDetectorError):
    """Two corpus functions share one (file, contract, function) identity."""

    def __init__(self, keys):
        self.keys = list(keys)
        shown = ", ".join(str(key) for key in self.keys[:5])
        more = f" and {len(self.keys) - 5} more" if len(self.keys) > 5 else ""
        super().__init__(f"duplicate function identities in the corpus: {shown}{more}")
