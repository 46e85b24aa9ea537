"""
Model persistence.

Binary container, all integers and floats little-endian:

    magic            b"EV2V"
    version          u16
    policy           str      (u16 length + utf-8)
    fork             str
    d, k             u32, u32
    hyperparameters  f64 alpha, f64 min_alpha_ratio, u32 epochs,
                     i32 infer_epochs (-1 = same as epochs), u32 min_count, i64 seed
    loss history     u32 n, n * f64
    vocabulary       u32 V, V * (str token, u64 count)        id order
    functions        u32 F, F * (str file, str contract, str function)
    has_index        u8
    v                V * d   f4
    v_out            V * 2d  f4
    theta            F * 2d  f4
    index            F * 2d  f4   (only when has_index)
    crc32            u32 over everything above

No timestamps are written, so equal models give byte-identical files.
"""

import io
import os
import struct
import zlib
from pathlib import Path
from typing import List, Union

import numpy as np

from ..models.data_models import FunctionKey, Hyperparameters
from ..models.exceptions import ConfigError, ModelFormatError
from ..parsers.opcodes import opcode_table
from ..parsers.tokenizer import NormalizationPolicy
from ..utils.logger import Logger
from .model import REAL, ModelParams
from .vocabulary import Vocabulary

logger = Logger(__name__)

MAGIC = b"EV2V"
FORMAT_VERSION = 1
_FLOAT = np.dtype("<f4")

PathLike = Union[str, os.PathLike]


class _Writer:
    def __init__(self):
        self.buffer = io.BytesIO()

    def pack(self, fmt: str, *values) -> None:
        self.buffer.write(struct.pack("<" + fmt, *values))

    def string(self, value: str) -> None:
        data = value.encode("utf-8")
        if len(data) > 0xFFFF:
            raise ValueError(f"string too long for the model file: {value[:40]}...")
        self.pack("H", len(data))
        self.buffer.write(data)

    def floats(self, array: np.ndarray) -> None:
        self.buffer.write(np.ascontiguousarray(array, dtype=_FLOAT).tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(f"model file truncated at byte {self.pos} (needed {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return values[0] if len(values) == 1 else values

    def string(self) -> str:
        try:
            return self.take(self.unpack("H")).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ModelFormatError(f"invalid string in model file: {e}") from None

    def floats(self, rows: int, cols: int) -> np.ndarray:
        raw = self.take(rows * cols * _FLOAT.itemsize)
        return np.frombuffer(raw, dtype=_FLOAT).reshape(rows, cols).astype(REAL)


def dumps_model(params: ModelParams) -> bytes:
    """Serialize a model to bytes."""
    hp = params.hyperparams
    d = params.dim
    writer = _Writer()
    writer.buffer.write(MAGIC)
    writer.pack("H", FORMAT_VERSION)
    writer.string(NormalizationPolicy(params.policy).value)
    writer.string(params.fork)
    writer.pack("II", d, hp.negative)
    writer.pack("ddIiIq", hp.alpha, hp.min_alpha_ratio, hp.epochs,
                -1 if hp.infer_epochs is None else hp.infer_epochs, hp.min_count, hp.seed)

    writer.pack("I", len(params.loss_history))
    for loss in params.loss_history:
        writer.pack("d", loss)

    writer.pack("I", len(params.vocab))
    for token, count in zip(params.vocab.tokens, params.vocab.counts):
        writer.string(token)
        writer.pack("Q", int(count))

    writer.pack("I", len(params.function_keys))
    for key in params.function_keys:
        writer.string(key.file)
        writer.string(key.contract)
        writer.string(key.function)

    writer.pack("B", 1 if params.index_vectors is not None else 0)
    writer.floats(params.vectors)
    writer.floats(params.output_vectors)
    writer.floats(params.function_vectors)
    if params.index_vectors is not None:
        writer.floats(params.index_vectors)

    body = writer.buffer.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads_model(data: bytes) -> ModelParams:
    """
    Deserialize a model.

    Raises:
        ModelFormatError: Wrong magic, unsupported version, checksum mismatch or truncation
    """
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if len(data) < len(MAGIC) + 2 + 4:
        raise ModelFormatError("model file truncated")

    reader = _Reader(data[:-4])
    reader.take(len(MAGIC))
    version = reader.unpack("H")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")

    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise ModelFormatError("model file checksum mismatch (truncated or corrupted)")

    try:
        policy = NormalizationPolicy.from_string(reader.string())
    except ValueError as e:
        raise ModelFormatError(str(e)) from None
    fork = reader.string()
    try:
        opcode_table(fork)
    except ConfigError as e:
        raise ModelFormatError(f"model names an unknown fork: {e}") from None

    d, k = reader.unpack("II")
    alpha, min_alpha_ratio, epochs, infer_epochs, min_count, seed = reader.unpack("ddIiIq")
    hyperparams = Hyperparameters(
        dim=d, negative=k, alpha=alpha, min_alpha_ratio=min_alpha_ratio, epochs=epochs,
        infer_epochs=None if infer_epochs < 0 else infer_epochs, min_count=min_count, seed=seed,
    )

    loss_history: List[float] = [reader.unpack("d") for _ in range(reader.unpack("I"))]

    vocab_size = reader.unpack("I")
    tokens, counts = [], []
    for _ in range(vocab_size):
        tokens.append(reader.string())
        counts.append(reader.unpack("Q"))
    try:
        vocab = Vocabulary(tokens, counts)
    except ValueError as e:
        raise ModelFormatError(f"invalid vocabulary block: {e}") from None

    function_count = reader.unpack("I")
    keys = [FunctionKey(reader.string(), reader.string(), reader.string()) for _ in range(function_count)]
    has_index = reader.unpack("B")

    vectors = reader.floats(vocab_size, d)
    output_vectors = reader.floats(vocab_size, 2 * d)
    function_vectors = reader.floats(function_count, 2 * d)
    index_vectors = reader.floats(function_count, 2 * d) if has_index else None
    if reader.pos != len(reader.data):
        raise ModelFormatError(f"{len(reader.data) - reader.pos} unexpected trailing bytes in model file")

    return ModelParams(
        vocab=vocab,
        function_keys=keys,
        vectors=vectors,
        output_vectors=output_vectors,
        function_vectors=function_vectors,
        hyperparams=hyperparams,
        policy=policy,
        fork=fork,
        index_vectors=index_vectors,
        loss_history=loss_history,
    )


def save_model(params: ModelParams, path: PathLike) -> None:
    """Write a model file atomically (temporary file, then rename)."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    data = dumps_model(params)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    logger.info(f"Saved model to {path} ({len(data)} bytes, {len(params.vocab)} tokens, "
                f"{len(params.function_keys)} functions)")


def load_model(path: PathLike) -> ModelParams:
    """Read a model file; never returns a partial model."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ModelFormatError(f"cannot read model file {path}: {e}") from None
    params = loads_model(data)
    logger.info(f"Loaded model from {path} (d={params.dim}, {len(params.vocab)} tokens)")
    return params
