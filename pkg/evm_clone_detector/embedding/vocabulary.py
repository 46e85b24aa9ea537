"""
Token vocabulary and the negative-sampling noise distribution.
"""

from collections import Counter
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..models.data_models import TokenizedInstruction
from ..models.exceptions import EmptyCorpusError
from ..utils.logger import Logger

logger = Logger(__name__)

UNK = "UNK"
NOISE_EXPONENT = 0.75


class Vocabulary:
    """Token <-> id bijection with frequencies and the noise distribution P_n ∝ freq^0.75.

    `UNK` always has id 0; it collects tokens below min_count and any
    out-of-vocabulary token seen at inference time.
    """

    def __init__(self, tokens: Sequence[str], counts: Sequence[int]):
        if not tokens or tokens[0] != UNK:
            raise ValueError("vocabulary must start with UNK")
        if len(tokens) != len(counts):
            raise ValueError("tokens and counts differ in length")
        self.tokens: List[str] = list(tokens)
        self.index: Dict[str, int] = {token: i for i, token in enumerate(self.tokens)}
        self.counts = np.asarray(counts, dtype=np.int64)

        weights = self.counts.astype(np.float64) ** NOISE_EXPONENT
        total = weights.sum()
        if total <= 0:
            raise EmptyCorpusError("vocabulary has no token occurrences")
        self.noise = weights / total
        self._cumulative = np.cumsum(weights)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> int:
        """Id of a token, folding unknown tokens to UNK."""
        return self.index.get(token, 0)

    def encode(self, instruction: TokenizedInstruction) -> Tuple[int, np.ndarray]:
        """Ids of the operation token and of the operand tokens."""
        operands = np.fromiter((self.lookup(t) for t in instruction.operands), dtype=np.int64,
                               count=len(instruction.operands))
        return self.lookup(instruction.operation), operands

    def frequency(self, token: str) -> int:
        return int(self.counts[self.lookup(token)])

    def noise_probability(self, token: str) -> float:
        return float(self.noise[self.lookup(token)])

    def sample_negatives(self, rng: np.random.Generator, k: int, target: int) -> np.ndarray:
        """
        Draw k token ids i.i.d. from P_n, redrawing any draw equal to target.

        Returns fewer than k ids only when the target carries all the noise mass,
        in which case no valid negative exists.
        """
        if k <= 0 or self.noise[target] >= 1.0 - 1e-12:
            return np.empty(0, dtype=np.int64)
        draws = self._draw(rng, k)
        rejected = draws == target
        while rejected.any():
            draws[rejected] = self._draw(rng, int(rejected.sum()))
            rejected = draws == target
        return draws

    def sample_negatives_batch(self, rng: np.random.Generator, k: int, targets: np.ndarray) -> np.ndarray:
        """
        Draw k negatives for each target in one pass, redrawing any draw equal to its row's target.

        Returns:
            Array of shape (len(targets), k); rows whose target carries all the
            noise mass hold -1, since no valid negative exists for them
        """
        targets = np.asarray(targets, dtype=np.int64)
        if k <= 0 or len(targets) == 0:
            return np.empty((len(targets), 0), dtype=np.int64)
        hopeless = self.noise[targets] >= 1.0 - 1e-12
        draws = self._draw(rng, len(targets) * k).reshape(len(targets), k)
        rejected = (draws == targets[:, None]) & ~hopeless[:, None]
        while rejected.any():
            draws[rejected] = self._draw(rng, int(rejected.sum()))
            rejected = (draws == targets[:, None]) & ~hopeless[:, None]
        draws[hopeless] = -1
        return draws

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n) * self._cumulative[-1]
        ids = np.searchsorted(self._cumulative, u, side="right")
        return np.minimum(ids, len(self.tokens) - 1).astype(np.int64)

    def frequencies(self) -> Mapping[str, int]:
        return {token: int(count) for token, count in zip(self.tokens, self.counts)}


def build_vocab(corpus: Iterable[Iterable[TokenizedInstruction]], min_count: int = 1) -> Vocabulary:
    """
    Build a vocabulary from tokenized instruction sequences.

    Args:
        corpus: Sequences of tokenized instructions (one per function)
        min_count: Tokens seen fewer times are folded into UNK

    Returns:
        Vocabulary ordered by descending frequency, ties by token

    Raises:
        EmptyCorpusError: If the corpus contains no tokens
    """
    counter: Counter = Counter()
    for sequence in corpus:
        for instruction in sequence:
            counter.update(instruction.tokens())

    if not counter:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")

    unk_count = counter.pop(UNK, 0)
    kept: List[Tuple[str, int]] = []
    for token, count in counter.items():
        if count >= min_count:
            kept.append((token, count))
        else:
            unk_count += count
    kept.sort(key=lambda item: (-item[1], item[0]))

    folded = len(counter) - len(kept)
    vocab = Vocabulary([UNK] + [token for token, _ in kept], [unk_count] + [count for _, count in kept])
    logger.info(f"Built vocabulary of {len(vocab)} tokens ({folded} folded into {UNK})")
    return vocab


def vocabulary_from_frequencies(frequencies: Mapping[str, int], order: Optional[Sequence[str]] = None) -> Vocabulary:
    """Rebuild a vocabulary from stored frequencies, keeping the stored id order."""
    tokens = list(order) if order is not None else [UNK] + sorted(t for t in frequencies if t != UNK)
    return Vocabulary(tokens, [int(frequencies.get(token, 0)) for token in tokens])
