#!/usr/bin/env python
"""
Unit tests for the binary model format.
"""

import os
import struct
import sys
import tempfile
import unittest
import zlib
from pathlib import Path

import numpy as np

# Add the parent directory to the path so we can import the modules
sys.path.append(str(Path(__file__).parent.parent.parent))

from evm_clone_detector.embedding.model import ModelParams
from evm_clone_detector.embedding.persistence import (
    FORMAT_VERSION, MAGIC, dumps_model, load_model, loads_model, save_model
)
from evm_clone_detector.embedding.vocabulary import UNK, Vocabulary
from evm_clone_detector.models.data_models import FunctionKey, Hyperparameters
from evm_clone_detector.models.exceptions import ModelFormatError
from evm_clone_detector.parsers.tokenizer import NormalizationPolicy


def sample_params(with_index: bool = True) -> ModelParams:
    rng = np.random.default_rng(8)
    vocab = Vocabulary([UNK, "PUSH1", "0x01", "ADD"], [0, 5, 3, 2])
    keys = [FunctionKey("a", "main", "dispatch"), FunctionKey("a", "main", "0xa9059cbb"), FunctionKey("b", "Lib", "main")]
    hyperparams = Hyperparameters(dim=4, negative=3, alpha=0.05, epochs=7, infer_epochs=None, min_count=2, seed=42)
    params = ModelParams.initialize(vocab, keys, hyperparams, NormalizationPolicy.KEEP_SELECTORS, "cancun", rng=rng)
    params.output_vectors = rng.normal(size=params.output_vectors.shape).astype(np.float32)
    params.function_vectors = rng.normal(size=params.function_vectors.shape).astype(np.float32)
    if with_index:
        params.index_vectors = rng.normal(size=params.function_vectors.shape).astype(np.float32)
    params.loss_history = [2.5, 1.25, 0.75]
    return params


class TestModelFormat(unittest.TestCase):
    """Serialisation of trained models."""

    def assert_same_model(self, restored: ModelParams, params: ModelParams):
        self.assertEqual(restored.vocab.tokens, params.vocab.tokens)
        np.testing.assert_array_equal(restored.vocab.counts, params.vocab.counts)
        self.assertEqual(restored.function_keys, params.function_keys)
        np.testing.assert_array_equal(restored.vectors, params.vectors)
        np.testing.assert_array_equal(restored.output_vectors, params.output_vectors)
        np.testing.assert_array_equal(restored.function_vectors, params.function_vectors)
        self.assertEqual(restored.policy, params.policy)
        self.assertEqual(restored.fork, params.fork)
        self.assertEqual(restored.loss_history, params.loss_history)
        self.assertEqual(restored.hyperparams, params.hyperparams)
        if params.index_vectors is None:
            self.assertIsNone(restored.index_vectors)
        else:
            np.testing.assert_array_equal(restored.index_vectors, params.index_vectors)

    def test_round_trip(self):
        for with_index in (True, False):
            params = sample_params(with_index)
            self.assert_same_model(loads_model(dumps_model(params)), params)

    def test_bytes_are_stable(self):
        params = sample_params()
        self.assertEqual(dumps_model(params), dumps_model(loads_model(dumps_model(params))))

    def test_header(self):
        data = dumps_model(sample_params())
        self.assertEqual(data[:4], MAGIC)
        self.assertEqual(struct.unpack("<H", data[4:6])[0], FORMAT_VERSION)
        self.assertEqual(struct.unpack("<I", data[-4:])[0], zlib.crc32(data[:-4]))

    def test_restored_theta_lookup(self):
        params = sample_params()
        restored = loads_model(dumps_model(params))
        key = FunctionKey("b", "Lib", "main")
        np.testing.assert_array_equal(restored.theta(key), params.function_vectors[2])

    def test_bad_magic(self):
        data = dumps_model(sample_params())
        with self.assertRaises(ModelFormatError):
            loads_model(b"XXXX" + data[4:])
        with self.assertRaises(ModelFormatError):
            loads_model(b"")

    def test_version_mismatch(self):
        data = bytearray(dumps_model(sample_params()))
        data[4:6] = struct.pack("<H", FORMAT_VERSION + 1)
        with self.assertRaises(ModelFormatError) as ctx:
            loads_model(bytes(data))
        self.assertIn("version", str(ctx.exception))

    def test_truncated(self):
        data = dumps_model(sample_params())
        for cut in (5, 10, len(data) // 2, len(data) - 1):
            with self.assertRaises(ModelFormatError):
                loads_model(data[:cut])

    def test_corrupted_payload(self):
        data = bytearray(dumps_model(sample_params()))
        data[len(data) // 2] ^= 0xFF
        with self.assertRaises(ModelFormatError):
            loads_model(bytes(data))


class TestModelFiles(unittest.TestCase):
    """Reading and writing model files."""

    def test_save_and_load(self):
        params = sample_params()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "models", "model.bin")
            save_model(params, path)
            self.assertFalse(os.path.exists(path + ".tmp"))
            restored = load_model(path)
        np.testing.assert_array_equal(restored.function_vectors, params.function_vectors)

    def test_missing_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ModelFormatError):
                load_model(os.path.join(tmp, "absent.bin"))


if __name__ == "__main__":
    unittest.main()
