"""
Embedding model parameters and the negative-sampling objective.

Notation used in this module:

    v[t]      input vector of token t, dimension d
    v_out[t]  output (prediction-side) vector of token t, dimension 2d
    theta[f]  vector of function f, dimension 2d
    CT(in)    v[op] concatenated with the mean of v over the operands (zeros if none)
    delta(j)  (theta + CT(in_{j-1}) + CT(in_{j+1})) / 3, a missing neighbour counts as zeros
    X(t)      v_out[t] . delta(j)

The loss of predicting token t_c of in_j against negatives t_1..t_k is

    -log sigmoid(X(t_c)) - sum_d log sigmoid(-X(t_d))

and all gradients below are gradients of that loss (SGD subtracts them).
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..models.data_models import FunctionKey, Hyperparameters, TokenizedInstruction, TrainingUnit
from ..parsers.opcodes import DEFAULT_FORK
from ..parsers.tokenizer import NormalizationPolicy
from .vocabulary import Vocabulary

REAL = np.float32


@dataclass
class ModelParams:
    """Trainable tables plus everything needed to reproduce tokenization."""
    vocab: Vocabulary
    function_keys: List[FunctionKey]
    vectors: np.ndarray          # v,     (V, d)
    output_vectors: np.ndarray   # v_out, (V, 2d)
    function_vectors: np.ndarray  # theta, (F, 2d)
    hyperparams: Hyperparameters
    policy: NormalizationPolicy = NormalizationPolicy.DEFAULT
    fork: str = DEFAULT_FORK
    index_vectors: Optional[np.ndarray] = None
    loss_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self._rows: Dict[FunctionKey, int] = {key: i for i, key in enumerate(self.function_keys)}

    @classmethod
    def initialize(cls, vocab: Vocabulary, function_keys: Sequence[FunctionKey], hyperparams: Hyperparameters,
                   policy: NormalizationPolicy = NormalizationPolicy.DEFAULT, fork: str = DEFAULT_FORK,
                   rng: Optional[np.random.Generator] = None, dtype=REAL) -> 'ModelParams':
        """v uniform in [-0.5/d, 0.5/d]; v_out and theta at zero."""
        d = hyperparams.dim
        rng = rng if rng is not None else np.random.default_rng(hyperparams.seed)
        vectors = rng.uniform(-0.5 / d, 0.5 / d, size=(len(vocab), d)).astype(dtype)
        return cls(
            vocab=vocab,
            function_keys=list(function_keys),
            vectors=vectors,
            output_vectors=np.zeros((len(vocab), 2 * d), dtype=dtype),
            function_vectors=np.zeros((len(function_keys), 2 * d), dtype=dtype),
            hyperparams=hyperparams,
            policy=policy,
            fork=fork,
        )

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def function_row(self, key: FunctionKey) -> int:
        return self._rows[key]

    def theta(self, key: FunctionKey) -> np.ndarray:
        return self.function_vectors[self._rows[key]]

    def check_finite(self) -> bool:
        return all(np.isfinite(table).all() for table in (self.vectors, self.output_vectors, self.function_vectors))


@dataclass
class StepGradients:
    """Sparse gradients of one negative-sampling step."""
    theta: np.ndarray          # (2d,)
    output_ids: np.ndarray     # (m,) rows of v_out touched: target then negatives
    output_grads: np.ndarray   # (m, 2d)
    input_ids: np.ndarray      # (n,) rows of v touched by the neighbours
    input_grads: np.ndarray    # (n, d)

    def dense(self, params: ModelParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Accumulate into full-size (theta, v, v_out) gradient arrays."""
        grad_in = np.zeros_like(params.vectors, dtype=np.float64)
        grad_out = np.zeros_like(params.output_vectors, dtype=np.float64)
        np.add.at(grad_in, self.input_ids, self.input_grads)
        np.add.at(grad_out, self.output_ids, self.output_grads)
        return self.theta.astype(np.float64), grad_in, grad_out


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(x))


def ct_ids(operation: int, operands: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """CT from token ids: v[op] ‖ mean(v[operands]), zeros when there are no operands."""
    d = vectors.shape[1]
    out = np.zeros(2 * d, dtype=vectors.dtype)
    out[:d] = vectors[operation]
    if len(operands):
        out[d:] = vectors[operands].mean(axis=0)
    return out


def ct(instruction: TokenizedInstruction, params: ModelParams) -> np.ndarray:
    """Instruction embedding CT(in) ∈ R^{2d}; tokens outside the vocabulary fold to UNK."""
    operation, operands = params.vocab.encode(instruction)
    return ct_ids(operation, operands, params.vectors)


def _neighbours(j: int, unit: TrainingUnit) -> List[int]:
    return [n for n in (j - 1, j + 1) if 0 <= n < len(unit)]


def delta(j: int, unit: TrainingUnit, params: ModelParams, theta: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Joint context vector of position j.

    Args:
        j: Instruction position, 0 <= j < len(unit)
        unit: The function's instruction sequence
        params: Model parameters
        theta: Function vector override (inference); defaults to the unit's trained row

    Returns:
        (theta + CT(in_{j-1}) + CT(in_{j+1})) / 3 with missing neighbours as zeros
    """
    if not 0 <= j < len(unit):
        raise IndexError(f"position {j} outside function of length {len(unit)}")
    total = np.array(params.theta(unit.key) if theta is None else theta, copy=True)
    for n in _neighbours(j, unit):
        total += ct_ids(unit.operation_ids[n], unit.operand_ids[n], params.vectors)
    return total / 3


def negative_sampling_loss(params: ModelParams, unit: TrainingUnit, j: int, target: int,
                           negatives: np.ndarray, theta: Optional[np.ndarray] = None) -> Tuple[float, StepGradients]:
    """
    Loss and analytic gradients for predicting target at position j against fixed negatives.

    Args:
        params: Model parameters (not modified)
        unit: Training unit
        j: Position of the instruction the target token belongs to
        target: Token id t_c
        negatives: Token ids t_1..t_k
        theta: Function vector override (inference)

    Returns:
        Tuple of (loss, gradients)
    """
    d = params.dim
    context = delta(j, unit, params, theta)

    output_ids = np.concatenate(([target], np.asarray(negatives, dtype=np.int64))).astype(np.int64)
    labels = np.zeros(len(output_ids), dtype=context.dtype)
    labels[0] = 1.0
    rows = params.output_vectors[output_ids]
    scores = rows @ context

    loss = float(-_log_sigmoid(scores[0]) - _log_sigmoid(-scores[1:]).sum())

    # d loss / d X(t) = sigmoid(X(t)) - [t = t_c]
    g = sigmoid(scores) - labels
    output_grads = np.outer(g, context)
    error = g @ rows
    grad_delta = error / 3

    input_ids: List[int] = []
    input_grads: List[np.ndarray] = []
    for n in _neighbours(j, unit):
        input_ids.append(int(unit.operation_ids[n]))
        input_grads.append(grad_delta[:d])
        operands = unit.operand_ids[n]
        for operand in operands:
            input_ids.append(int(operand))
            input_grads.append(grad_delta[d:] / len(operands))

    return loss, StepGradients(
        theta=grad_delta,
        output_ids=output_ids,
        output_grads=output_grads,
        input_ids=np.asarray(input_ids, dtype=np.int64),
        input_grads=np.asarray(input_grads, dtype=context.dtype).reshape(len(input_ids), d),
    )


def neg_sample_step(target: int, j: int, unit: TrainingUnit, params: ModelParams,
                    rng: np.random.Generator, theta: Optional[np.ndarray] = None) -> Tuple[float, StepGradients]:
    """Draw k negatives from P_n (never equal to target) and evaluate the step."""
    negatives = params.vocab.sample_negatives(rng, params.hyperparams.negative, target)
    return negative_sampling_loss(params, unit, j, target, negatives, theta)


def apply_gradients(params: ModelParams, row: int, grads: StepGradients, alpha: float) -> None:
    """SGD update of theta[row], the touched v_out rows and the neighbour v rows."""
    params.function_vectors[row] -= alpha * grads.theta
    np.add.at(params.output_vectors, grads.output_ids, -alpha * grads.output_grads)
    if len(grads.input_ids):
        np.add.at(params.vectors, grads.input_ids, -alpha * grads.input_grads)
