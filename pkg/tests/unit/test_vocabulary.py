#!/usr/bin/env python
"""
Unit tests for the vocabulary and the negative-sampling noise distribution.
"""

import sys
import unittest
from pathlib import Path

import numpy as np

# Add the parent directory to the path so we can import the modules
sys.path.append(str(Path(__file__).parent.parent.parent))

from evm_clone_detector.embedding.vocabulary import UNK, Vocabulary, build_vocab, vocabulary_from_frequencies
from evm_clone_detector.models.data_models import TokenizedInstruction
from evm_clone_detector.models.exceptions import EmptyCorpusError


def _sequence(*operations):
    return [TokenizedInstruction(op) for op in operations]


class TestBuildVocab(unittest.TestCase):
    """Vocabulary construction."""

    def test_noise_distribution(self):
        vocab = build_vocab([_sequence("ADD", "ADD", "MUL", "ADD")])
        self.assertEqual(vocab.tokens, [UNK, "ADD", "MUL"])
        self.assertAlmostEqual(vocab.noise_probability("ADD"), 3 ** 0.75 / (3 ** 0.75 + 1), places=9)
        self.assertAlmostEqual(vocab.noise_probability("ADD"), 0.695, places=3)
        self.assertAlmostEqual(float(vocab.noise.sum()), 1.0, places=12)
        self.assertEqual(vocab.noise_probability(UNK), 0.0)

    def test_operands_are_tokens(self):
        vocab = build_vocab([[TokenizedInstruction("PUSH1", ("0x01",)), TokenizedInstruction("PUSH1", ("0x02",))]])
        self.assertEqual(vocab.frequency("PUSH1"), 2)
        self.assertEqual(vocab.frequency("0x01"), 1)
        op, operands = vocab.encode(TokenizedInstruction("PUSH1", ("0x02", "0x99")))
        self.assertEqual(op, vocab.lookup("PUSH1"))
        self.assertEqual(list(operands), [vocab.lookup("0x02"), 0])

    def test_min_count_folds_into_unk(self):
        vocab = build_vocab([_sequence("ADD", "ADD", "MUL", "SUB")], min_count=2)
        self.assertEqual(vocab.tokens, [UNK, "ADD"])
        self.assertEqual(vocab.frequency(UNK), 2)
        self.assertEqual(vocab.lookup("MUL"), 0)

    def test_order_is_frequency_then_token(self):
        vocab = build_vocab([_sequence("SUB", "ADD", "MUL", "MUL")])
        self.assertEqual(vocab.tokens, [UNK, "MUL", "ADD", "SUB"])

    def test_empty_corpus(self):
        with self.assertRaises(EmptyCorpusError):
            build_vocab([])
        with self.assertRaises(EmptyCorpusError):
            build_vocab([[], []])

    def test_rebuild_from_frequencies(self):
        vocab = build_vocab([_sequence("ADD", "ADD", "MUL")])
        rebuilt = vocabulary_from_frequencies(vocab.frequencies(), order=vocab.tokens)
        self.assertEqual(rebuilt.tokens, vocab.tokens)
        np.testing.assert_array_equal(rebuilt.noise, vocab.noise)

    def test_first_token_must_be_unk(self):
        with self.assertRaises(ValueError):
            Vocabulary(["ADD"], [1])


class TestSampleNegatives(unittest.TestCase):
    """Drawing negatives from the noise distribution."""

    def setUp(self):
        self.vocab = build_vocab([_sequence("ADD", "ADD", "ADD", "MUL", "SUB", "SUB")])

    def test_never_returns_target(self):
        rng = np.random.default_rng(0)
        target = self.vocab.lookup("ADD")
        for _ in range(200):
            draws = self.vocab.sample_negatives(rng, 7, target)
            self.assertEqual(len(draws), 7)
            self.assertNotIn(target, draws)

    def test_empirical_frequencies(self):
        rng = np.random.default_rng(1)
        target = self.vocab.lookup("MUL")
        draws = self.vocab.sample_negatives(rng, 40000, target)
        # Conditioned on excluding the target, P_n renormalises over the rest
        rest = self.vocab.noise.copy()
        rest[target] = 0.0
        rest /= rest.sum()
        observed = np.bincount(draws, minlength=len(self.vocab)) / len(draws)
        np.testing.assert_allclose(observed, rest, atol=0.01)

    def test_deterministic_given_rng(self):
        target = self.vocab.lookup("SUB")
        first = self.vocab.sample_negatives(np.random.default_rng(3), 10, target)
        second = self.vocab.sample_negatives(np.random.default_rng(3), 10, target)
        np.testing.assert_array_equal(first, second)

    def test_single_token_has_no_negatives(self):
        vocab = build_vocab([_sequence("ADD", "ADD")])
        draws = vocab.sample_negatives(np.random.default_rng(0), 5, vocab.lookup("ADD"))
        self.assertEqual(len(draws), 0)

    def test_zero_k(self):
        self.assertEqual(len(self.vocab.sample_negatives(np.random.default_rng(0), 0, 1)), 0)

    def test_batch_never_returns_row_target(self):
        rng = np.random.default_rng(4)
        targets = np.array([self.vocab.lookup(t) for t in ("ADD", "MUL", "SUB")] * 50)
        draws = self.vocab.sample_negatives_batch(rng, 9, targets)
        self.assertEqual(draws.shape, (150, 9))
        self.assertFalse((draws == targets[:, None]).any())
        self.assertTrue((draws >= 0).all())

    def test_batch_empirical_frequencies(self):
        target = self.vocab.lookup("ADD")
        draws = self.vocab.sample_negatives_batch(np.random.default_rng(5), 40, np.full(1000, target))
        rest = self.vocab.noise.copy()
        rest[target] = 0.0
        rest /= rest.sum()
        observed = np.bincount(draws.ravel(), minlength=len(self.vocab)) / draws.size
        np.testing.assert_allclose(observed, rest, atol=0.01)

    def test_batch_pads_rows_without_negatives(self):
        vocab = build_vocab([_sequence("ADD", "ADD")])
        add, unk = vocab.lookup("ADD"), 0
        draws = vocab.sample_negatives_batch(np.random.default_rng(0), 3, np.array([add, unk]))
        np.testing.assert_array_equal(draws[0], [-1, -1, -1])
        np.testing.assert_array_equal(draws[1], [add, add, add])
        self.assertEqual(vocab.sample_negatives_batch(np.random.default_rng(0), 0, np.array([add])).shape, (1, 0))


if __name__ == "__main__":
    unittest.main()
