"""
Training and inference.

Training walks every contract file, contract, function, block and
instruction, predicting each token of the instruction from the function
vector and the neighbouring instructions. Inference repeats the walk for a
query function with every token table frozen and only the query's own
vector learning.
"""

import concurrent.futures
from collections import Counter
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..models.data_models import ContractFile, FunctionKey, FunctionUnit, Hyperparameters, TokenizedInstruction, TrainingUnit
from ..models.exceptions import DuplicateFunctionError, EmptyCorpusError, TrainingDivergedError
from ..parsers.opcodes import DEFAULT_FORK
from ..parsers.tokenizer import NormalizationPolicy, tokenize_all
from ..utils.logger import Logger
from .model import ModelParams, apply_gradients, ct_ids, neg_sample_step, sigmoid
from .vocabulary import Vocabulary, build_vocab

logger = Logger(__name__)


def iter_functions(corpus: Iterable[ContractFile]) -> Iterator[Tuple[FunctionKey, FunctionUnit]]:
    """Functions in training order: file, contract, function."""
    for contract_file in corpus:
        for contract, function in contract_file.iter_functions():
            yield FunctionKey(contract_file.name, contract.name, function.name), function


def tokenize_function(function: FunctionUnit,
                      policy: NormalizationPolicy = NormalizationPolicy.DEFAULT) -> List[TokenizedInstruction]:
    """Blocks concatenated in schema order, tokenized."""
    return tokenize_all(function.instructions(), policy)


def encode_function(key: FunctionKey, function: FunctionUnit, vocab: Vocabulary,
                    policy: NormalizationPolicy = NormalizationPolicy.DEFAULT) -> TrainingUnit:
    """Tokenize a function and map its tokens through the vocabulary (UNK-folded)."""
    instructions = tokenize_function(function, policy)
    encoded = [vocab.encode(ins) for ins in instructions]
    return TrainingUnit(
        key=key,
        instructions=instructions,
        operation_ids=np.asarray([op for op, _ in encoded], dtype=np.int64),
        operand_ids=[operands for _, operands in encoded],
    )


def build_training_units(corpus: Iterable[ContractFile], vocab: Vocabulary,
                         policy: NormalizationPolicy = NormalizationPolicy.DEFAULT) -> List[TrainingUnit]:
    units = []
    for key, function in iter_functions(corpus):
        unit = encode_function(key, function, vocab, policy)
        if len(unit):
            units.append(unit)
    return units


def alpha_at(step: int, total_steps: int, hyperparams: Hyperparameters) -> float:
    """Learning rate decayed linearly from alpha to alpha/100 over all steps."""
    progress = step / max(1, total_steps - 1)
    return max(hyperparams.min_alpha, hyperparams.alpha - (hyperparams.alpha - hyperparams.min_alpha) * progress)


def _duplicate_keys(keys: Iterable[FunctionKey]) -> List[FunctionKey]:
    return [key for key, count in Counter(keys).items() if count > 1]


def _token_count(units: Sequence[TrainingUnit]) -> int:
    return sum(len(unit.operation_ids) + sum(len(ops) for ops in unit.operand_ids) for unit in units)


def train(corpus: Sequence[ContractFile], hyperparams: Hyperparameters,
          policy: NormalizationPolicy = NormalizationPolicy.DEFAULT, fork: str = DEFAULT_FORK,
          progress: bool = False) -> ModelParams:
    """
    Train token and function vectors on a corpus.

    Args:
        corpus: Contract files
        hyperparams: Dimension, negatives, learning rate, epochs, min_count, seed, workers
        policy: Operand normalisation policy
        fork: Opcode table the corpus was decoded with (recorded in the model)
        progress: Show a progress bar over epochs

    Returns:
        Trained parameters; per-epoch mean loss in `loss_history`

    Raises:
        EmptyCorpusError: If the corpus has no instructions
        DuplicateFunctionError: If two functions share a file, contract and function name
        TrainingDivergedError: On a non-finite loss
    """
    functions = list(iter_functions(corpus))
    if not functions:
        raise EmptyCorpusError("corpus contains no functions")
    duplicates = _duplicate_keys(key for key, _ in functions)
    if duplicates:
        raise DuplicateFunctionError(duplicates)

    vocab = build_vocab((tokenize_function(function, policy) for _, function in functions), hyperparams.min_count)
    units = build_training_units(corpus, vocab, policy)

    rng = np.random.default_rng(hyperparams.seed)
    params = ModelParams.initialize(vocab, [unit.key for unit in units], hyperparams, policy, fork, rng=rng)

    total_steps = hyperparams.epochs * _token_count(units)
    logger.info(
        f"Training on {len(units)} functions, {len(vocab)} tokens, d={hyperparams.dim}, "
        f"k={hyperparams.negative}, epochs={hyperparams.epochs}, workers={hyperparams.workers}"
    )
    if hyperparams.epochs == 0:
        logger.warning("epochs=0: function vectors stay at zero")

    counter = _StepCounter()
    for epoch in tqdm(range(hyperparams.epochs), desc="Training", disable=not progress):
        if hyperparams.workers > 1:
            losses = _train_epoch_parallel(params, units, epoch, counter, total_steps)
        else:
            losses = _train_partition(params, units, rng, counter, total_steps)
        mean_loss = float(np.mean(losses)) if losses else 0.0
        params.loss_history.append(mean_loss)
        logger.info(f"Epoch {epoch + 1}/{hyperparams.epochs}: mean loss {mean_loss:.6f}")

    return params


class _StepCounter:
    """Global step for the learning-rate schedule; increments are unsynchronised in parallel mode."""

    def __init__(self):
        self.value = 0


def _train_partition(params: ModelParams, units: Sequence[TrainingUnit], rng: np.random.Generator,
                     counter: _StepCounter, total_steps: int) -> List[float]:
    hyperparams = params.hyperparams
    losses = []
    for unit in units:
        row = params.function_row(unit.key)
        for j in range(len(unit)):
            for target in unit.target_ids(j):
                alpha = alpha_at(counter.value, total_steps, hyperparams)
                loss, grads = neg_sample_step(target, j, unit, params, rng)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(counter.value, str(unit.key), loss)
                apply_gradients(params, row, grads, alpha)
                counter.value += 1
                losses.append(loss)
    return losses


def _train_epoch_parallel(params: ModelParams, units: Sequence[TrainingUnit], epoch: int,
                          counter: _StepCounter, total_steps: int) -> List[float]:
    """Disjoint function partitions per thread, unsynchronised (asynchronous SGD, nondeterministic)."""
    workers = params.hyperparams.workers
    partitions = [units[w::workers] for w in range(workers)]
    losses: List[float] = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(
                _train_partition, params, partition,
                np.random.default_rng([params.hyperparams.seed, epoch, w]), counter, total_steps,
            )
            for w, partition in enumerate(partitions) if partition
        ]
        for future in concurrent.futures.as_completed(futures):
            losses.extend(future.result())
    return losses


def _frozen(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


def infer(query: TrainingUnit, params: ModelParams, hyperparams: Optional[Hyperparameters] = None,
          seed: Optional[int] = None) -> np.ndarray:
    """
    Infer the vector of a function not seen in training.

    Only the query's own vector is updated; v and v_out are read through
    read-only views. The neighbour context is precomputed once because it
    depends on frozen tables only.

    Args:
        query: Function encoded through the trained vocabulary
        params: Trained model
        hyperparams: Overrides for negatives, learning rate and inference epochs
        seed: Sampling seed (defaults to the hyperparameter seed)

    Returns:
        The query's function vector, dimension 2d
    """
    if len(query) == 0:
        raise EmptyCorpusError(f"query {query.key} has no instructions")

    hyperparams = hyperparams or params.hyperparams
    rng = np.random.default_rng(hyperparams.seed if seed is None else seed)
    vectors = _frozen(params.vectors)
    output_vectors = _frozen(params.output_vectors)
    vocab = params.vocab
    k = hyperparams.negative

    n = len(query)
    cts = np.stack([ct_ids(query.operation_ids[j], query.operand_ids[j], vectors) for j in range(n)])
    context = np.zeros_like(cts)
    if n > 1:
        context[1:] += cts[:-1]
        context[:-1] += cts[1:]

    epochs = hyperparams.effective_infer_epochs
    positions = np.array([j for j in range(n) for _ in query.target_ids(j)], dtype=np.int64)
    targets = np.array([t for j in range(n) for t in query.target_ids(j)], dtype=np.int64)
    total_steps = epochs * len(targets)
    theta = np.zeros(2 * params.dim, dtype=params.function_vectors.dtype)
    step = 0
    for _ in range(epochs):
        negatives = vocab.sample_negatives_batch(rng, k, targets)
        padded = bool((negatives < 0).any())
        batch = np.column_stack((targets, negatives))
        for ids, j in zip(batch, positions):
            if padded:
                ids = ids[ids >= 0]
            alpha = alpha_at(step, total_steps, hyperparams)
            rows = output_vectors[ids]
            g = sigmoid(rows @ ((theta + context[j]) / 3))
            g[0] -= 1.0
            theta -= alpha * (g @ rows) / 3
            step += 1

    return theta


def infer_many(units: Sequence[TrainingUnit], params: ModelParams, hyperparams: Optional[Hyperparameters] = None,
               workers: int = 1, progress: bool = False) -> np.ndarray:
    """Infer several queries; parallel queries share the frozen tables read-only."""
    dim = 2 * params.dim
    if not units:
        return np.zeros((0, dim), dtype=params.function_vectors.dtype)
    if workers <= 1:
        vectors = [infer(unit, params, hyperparams) for unit in tqdm(units, desc="Inferring", disable=not progress)]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            vectors = list(tqdm(executor.map(lambda unit: infer(unit, params, hyperparams), units),
                                total=len(units), desc="Inferring", disable=not progress))
    return np.stack(vectors)
