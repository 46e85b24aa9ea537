"""
Cross-validation harness.

Contracts are shuffled with a seeded generator and split into near-equal
folds. Each fold trains a fresh model on the other folds, embeds its own
contracts as queries and compares the propagated tags with the labels.
"""

import concurrent.futures
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..embedding.trainer import train
from ..models.data_models import TAXONOMY, Contract, ContractFile, ContractKey, Hyperparameters, LabelStore, file_aliases
from ..models.exceptions import EvaluationError
from ..parsers.opcodes import DEFAULT_FORK
from ..parsers.tokenizer import NormalizationPolicy
from ..utils.logger import Logger
from .detector import IndexMode, attach_index, detect, model_index
from .vector_index import DEFAULT_THRESHOLD, DEFAULT_TOP_K

logger = Logger(__name__)

METRIC_COLUMNS = ["tag", "precision", "recall", "f1", "accuracy", "tp", "fp", "fn", "tn"]
MACRO_ROW = "macro"


@dataclass
class EvaluationSettings:
    """Everything a fold needs besides its data."""
    hyperparams: Hyperparameters = field(default_factory=Hyperparameters)
    policy: NormalizationPolicy = NormalizationPolicy.DEFAULT
    fork: str = DEFAULT_FORK
    threshold: float = DEFAULT_THRESHOLD
    top_k: Optional[int] = DEFAULT_TOP_K
    index_mode: IndexMode = IndexMode.REEMBED
    skip_boilerplate: bool = False


@dataclass
class EvaluationResult:
    """Per-tag metrics plus the run's bookkeeping."""
    metrics: pd.DataFrame
    tag_std: Dict[str, float]
    undefined: int
    folds: int
    contracts: int
    seconds_per_contract: float
    predictions: Dict[ContractKey, frozenset] = field(default_factory=dict)


def corpus_contracts(corpus: Sequence[ContractFile]) -> List[ContractKey]:
    return [ContractKey(contract_file.name, contract.name)
            for contract_file in corpus for contract in contract_file.contracts]


def split_folds(contracts: Sequence[ContractKey], folds: int, seed: int) -> List[List[ContractKey]]:
    """
    Shuffle contracts with the seed and cut them into `folds` near-equal parts.

    Raises:
        EvaluationError: When folds < 2 or folds exceeds the number of contracts
    """
    if folds < 2:
        raise EvaluationError(f"need at least 2 folds, got {folds} (the training set would be empty)")
    if folds > len(contracts):
        raise EvaluationError(f"{folds} folds requested but the corpus has only {len(contracts)} contracts")
    order = np.random.default_rng(seed).permutation(len(contracts))
    return [[contracts[i] for i in part] for part in np.array_split(order, folds)]


def restrict_corpus(corpus: Sequence[ContractFile], keep: set) -> List[ContractFile]:
    """Copy of the corpus holding only the given contracts; files left empty are dropped."""
    restricted = []
    for contract_file in corpus:
        contracts: List[Contract] = [c for c in contract_file.contracts if ContractKey(contract_file.name, c.name) in keep]
        if contracts:
            restricted.append(ContractFile(contract_file.name, contract_file.md5, contracts))
    return restricted


def iter_folds(corpus: Sequence[ContractFile], folds: int, seed: int) -> Iterator[Tuple[int, List[ContractFile], List[ContractFile]]]:
    """Yield (fold number, training files, test files)."""
    contracts = corpus_contracts(corpus)
    parts = split_folds(contracts, folds, seed)
    for number, part in enumerate(parts):
        test = set(part)
        train_keys = set(contracts) - test
        yield number, restrict_corpus(corpus, train_keys), restrict_corpus(corpus, test)


def _fold_detections(train_corpus: List[ContractFile], test_corpus: List[ContractFile],
                     labels: LabelStore, settings: EvaluationSettings):
    params = train(train_corpus, settings.hyperparams, settings.policy, settings.fork)
    attach_index(params, train_corpus, settings.index_mode)
    index = model_index(params, labels, settings.skip_boilerplate)

    detections = []
    started = time.perf_counter()
    for contract_file in test_corpus:
        detections.extend(detect(contract_file, params, index, settings.threshold, settings.top_k,
                                 settings.skip_boilerplate))
    elapsed = time.perf_counter() - started
    return detections, elapsed


def _run_folds(corpus: Sequence[ContractFile], folds: int, seed: int, progress: bool, workers: int,
               job: Callable[[List[ContractFile], List[ContractFile]], object]) -> List[object]:
    fold_data = list(iter_folds(corpus, folds, seed))
    if workers <= 1:
        return [job(train_files, test_files)
                for _, train_files, test_files in tqdm(fold_data, desc="Folds", disable=not progress)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(job, train_files, test_files) for _, train_files, test_files in fold_data]
        return [future.result() for future in tqdm(futures, desc="Folds", disable=not progress)]


def _ratio(numerator: int, denominator: int) -> Tuple[float, bool]:
    if denominator == 0:
        return 0.0, True
    return numerator / denominator, False


def metrics_table(truth: Mapping[ContractKey, frozenset],
                  predicted: Mapping[ContractKey, frozenset]) -> Tuple[pd.DataFrame, Dict[str, float], int]:
    """
    Confusion counts and ratios per tag, plus the macro row.

    Returns:
        Tuple of (metrics frame, standard deviation of each ratio across tags,
        number of 0/0 ratios reported as 0)
    """
    rows = []
    undefined = 0
    for tag in TAXONOMY:
        tp = fp = fn = tn = 0
        for contract, tags in truth.items():
            actual = tag in tags
            guessed = tag in predicted.get(contract, frozenset())
            tp += actual and guessed
            fp += guessed and not actual
            fn += actual and not guessed
            tn += not actual and not guessed
        precision, p_undef = _ratio(tp, tp + fp)
        recall, r_undef = _ratio(tp, tp + fn)
        f1, f_undef = _ratio(2 * precision * recall, precision + recall) if precision + recall else (0.0, True)
        accuracy, a_undef = _ratio(tp + tn, tp + fp + fn + tn)
        undefined += p_undef + r_undef + f_undef + a_undef
        rows.append({"tag": tag.value, "precision": precision, "recall": recall, "f1": f1,
                     "accuracy": accuracy, "tp": tp, "fp": fp, "fn": fn, "tn": tn})

    frame = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    ratios = ["precision", "recall", "f1", "accuracy"]
    counts = ["tp", "fp", "fn", "tn"]
    macro = {"tag": MACRO_ROW, **frame[ratios].mean().to_dict(), **frame[counts].sum().astype(int).to_dict()}
    tag_std = frame[ratios].std(ddof=0).to_dict()
    frame = pd.concat([frame, pd.DataFrame([macro], columns=METRIC_COLUMNS)], ignore_index=True)
    return frame, tag_std, int(undefined)


def evaluate(corpus: Sequence[ContractFile], labels: LabelStore, folds: int = 10, seed: int = 1,
             settings: Optional[EvaluationSettings] = None, workers: int = 1,
             progress: bool = False) -> EvaluationResult:
    """
    K-fold evaluation of tag prediction.

    Args:
        corpus: Labelled contract files
        labels: Vulnerability labels (unlabelled contracts count as tag-free)
        folds: Number of folds
        seed: Shuffle seed
        settings: Model and detection settings
        workers: Folds trained concurrently (each fold is deterministic on its own)
        progress: Show a progress bar over folds

    Returns:
        EvaluationResult with the per-tag metrics table

    Raises:
        EvaluationError: When folds < 2 or folds exceeds the number of contracts
    """
    settings = settings or EvaluationSettings()
    contracts = corpus_contracts(corpus)
    logger.info(f"Evaluating {len(contracts)} contracts with {folds}-fold cross-validation (seed {seed})")

    results = _run_folds(
        corpus, folds, seed, progress, workers,
        lambda train_files, test_files: _fold_detections(train_files, test_files, labels, settings),
    )

    predicted: Dict[ContractKey, frozenset] = {}
    total_seconds = 0.0
    for detections, elapsed in results:
        total_seconds += elapsed
        for detection in detections:
            predicted[detection.contract] = frozenset(detection.report.predicted)

    truth = {key: labels.tags_for(key.file, key.contract) for key in contracts}
    frame, tag_std, undefined = metrics_table(truth, predicted)
    per_contract = total_seconds / len(contracts) if contracts else 0.0
    logger.info(f"Macro precision {frame.iloc[-1]['precision']:.3f}, recall {frame.iloc[-1]['recall']:.3f}; "
                f"{per_contract * 1000:.1f} ms inference per contract")
    return EvaluationResult(frame, tag_std, undefined, folds, len(contracts), per_contract, predicted)


def _clone_fold(train_files: List[ContractFile], test_files: List[ContractFile],
                groups: Mapping[str, str], settings: EvaluationSettings) -> Tuple[int, int]:
    detections, _ = _fold_detections(train_files, test_files, LabelStore(), settings)
    matched = correct = 0
    for detection in detections:
        query_group = _group_of(groups, detection.contract.file)
        for matches in detection.matches.values():
            if not matches:
                continue
            matched += 1
            top = matches[0].match
            correct += query_group is not None and _group_of(groups, top.file) == query_group
    return matched, correct


def _group_of(groups: Mapping[str, str], file_name: str) -> Optional[str]:
    for alias in file_aliases(file_name):
        if alias in groups:
            return groups[alias]
    return None


def evaluate_clones(corpus: Sequence[ContractFile], clone_groups: Mapping[str, str], folds: int = 10,
                    seed: int = 1, settings: Optional[EvaluationSettings] = None, workers: int = 1,
                    progress: bool = False) -> pd.DataFrame:
    """
    Clone precision per fold: the share of test functions whose top-1 clone lies in their own clone group.

    Returns:
        Frame with one row per fold (fold, matched, correct, precision) followed by
        `mean` and `std` rows over the fold precisions
    """
    settings = settings or EvaluationSettings()
    results = _run_folds(
        corpus, folds, seed, progress, workers,
        lambda train_files, test_files: _clone_fold(train_files, test_files, clone_groups, settings),
    )
    rows = []
    for number, (matched, correct) in enumerate(results):
        precision, _ = _ratio(correct, matched)
        rows.append({"fold": str(number), "matched": matched, "correct": correct, "precision": precision})
    frame = pd.DataFrame(rows, columns=["fold", "matched", "correct", "precision"])
    summary = pd.DataFrame([
        {"fold": "mean", "matched": int(frame["matched"].sum()), "correct": int(frame["correct"].sum()),
         "precision": float(frame["precision"].mean())},
        {"fold": "std", "matched": 0, "correct": 0, "precision": float(frame["precision"].std(ddof=0))},
    ])
    logger.info(f"Clone precision {summary.iloc[0]['precision']:.3f} ± {summary.iloc[1]['precision']:.3f}")
    return pd.concat([frame, summary], ignore_index=True)


def metrics_to_csv(result: EvaluationResult, path: Optional[str] = None) -> str:
    """CSV text of the metrics table (written to `path` when given)."""
    text = result.metrics.to_csv(index=False, float_format="%.6f", lineterminator="\n")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    return text


def render_metrics(result: EvaluationResult) -> str:
    """Plain-text table: per-tag ratios, the macro row and the standard deviation across tags."""
    header = f"{'Tag':<20}{'Precision':>11}{'Recall':>9}{'F1':>9}{'Accuracy':>10}{'TP':>6}{'FP':>6}{'FN':>6}{'TN':>6}"
    lines = [header, "-" * len(header)]
    for row in result.metrics.itertuples(index=False):
        if row.tag == MACRO_ROW:
            lines.append("-" * len(header))
        lines.append(f"{row.tag:<20}{row.precision:>11.3f}{row.recall:>9.3f}{row.f1:>9.3f}{row.accuracy:>10.3f}"
                     f"{row.tp:>6}{row.fp:>6}{row.fn:>6}{row.tn:>6}")
    std = result.tag_std
    lines.append(f"{'std':<20}{std['precision']:>11.3f}{std['recall']:>9.3f}{std['f1']:>9.3f}{std['accuracy']:>10.3f}")
    lines.append("")
    lines.append(f"{result.contracts} contracts, {result.folds} folds, "
                 f"{result.seconds_per_contract * 1000:.1f} ms inference per contract")
    if result.undefined:
        lines.append(f"* {result.undefined} undefined ratio(s) (0/0) reported as 0")
    return "\n".join(lines)
