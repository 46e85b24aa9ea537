"""
Clone detector.

Builds the function index of a trained model and runs clone retrieval plus
label propagation for every contract of a query file.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..embedding.model import ModelParams
from ..embedding.trainer import build_training_units, encode_function, infer, infer_many, iter_functions
from ..models.data_models import CloneMatch, ContractFile, ContractKey, FunctionKey, LabelStore, TrainingUnit, VulnerabilityReport
from ..parsers.evm_disassembler import DISPATCH_FUNCTION, ORPHAN_FUNCTION
from ..utils.logger import Logger
from .label_propagation import propagate_labels
from .vector_index import DEFAULT_THRESHOLD, DEFAULT_TOP_K, VectorIndex, find_clones

logger = Logger(__name__)

BOILERPLATE_FUNCTIONS = frozenset({DISPATCH_FUNCTION, ORPHAN_FUNCTION})


class IndexMode(str, Enum):
    """How the function index of a model is produced."""
    REEMBED = "reembed"   # re-infer every training function with the frozen model
    TRAINED = "trained"   # use the function vectors learnt in training


def is_boilerplate(key: FunctionKey) -> bool:
    return key.function in BOILERPLATE_FUNCTIONS


def attach_index(params: ModelParams, corpus: Sequence[ContractFile], mode: IndexMode = IndexMode.REEMBED,
                 workers: int = 1, progress: bool = False) -> ModelParams:
    """
    Compute the index block stored with a model.

    In reembed mode every training function is embedded exactly the way a
    query is, so a byte-identical query scores similarity 1 against it.
    """
    if IndexMode(mode) is IndexMode.TRAINED:
        params.index_vectors = None
        return params
    units = build_training_units(corpus, params.vocab, params.policy)
    if [unit.key for unit in units] != params.function_keys:
        raise ValueError("corpus does not match the functions the model was trained on")
    logger.info(f"Re-embedding {len(units)} training functions for the index")
    params.index_vectors = infer_many(units, params, workers=workers, progress=progress)
    return params


def model_index(params: ModelParams, labels: Optional[LabelStore] = None,
                skip_boilerplate: bool = False) -> VectorIndex:
    """Index over the model's functions (index block if present, else the trained vectors)."""
    vectors = params.index_vectors if params.index_vectors is not None else params.function_vectors
    rows = [i for i, key in enumerate(params.function_keys) if not (skip_boilerplate and is_boilerplate(key))]
    keys = [params.function_keys[i] for i in rows]
    return VectorIndex.build(keys, vectors[rows], labels)


def encode_queries(contract_file: ContractFile, params: ModelParams,
                   skip_boilerplate: bool = False) -> List[TrainingUnit]:
    """Query units of a contract file, encoded through the model's vocabulary."""
    units = []
    for key, function in iter_functions([contract_file]):
        if skip_boilerplate and is_boilerplate(key):
            continue
        unit = encode_function(key, function, params.vocab, params.policy)
        if len(unit):
            units.append(unit)
    return units


@dataclass
class ContractDetection:
    """Clones and propagated labels of one query contract."""
    contract: ContractKey
    matches: Dict[str, List[CloneMatch]] = field(default_factory=dict)
    vectors: Dict[str, np.ndarray] = field(default_factory=dict)
    report: Optional[VulnerabilityReport] = None


def detect(contract_file: ContractFile, params: ModelParams, index: VectorIndex,
           threshold: float = DEFAULT_THRESHOLD, top_k: Optional[int] = DEFAULT_TOP_K,
           skip_boilerplate: bool = False, exclude_self: bool = False,
           units: Optional[List[TrainingUnit]] = None) -> List[ContractDetection]:
    """
    Detect clones of every function of a query file and propagate vulnerability labels.

    Args:
        contract_file: Query contract file
        params: Trained model
        index: Function index (carries the training labels)
        threshold: Clone similarity threshold, also the prediction threshold
        top_k: Maximum clones per function
        skip_boilerplate: Leave dispatcher and orphan functions out of the queries
        exclude_self: Never match a function to its own identity
        units: Pre-encoded query units

    Returns:
        One ContractDetection per contract of the file, in file order
    """
    units = units if units is not None else encode_queries(contract_file, params, skip_boilerplate)
    by_contract: Dict[ContractKey, List[Tuple[TrainingUnit, np.ndarray]]] = {}
    for unit in units:
        by_contract.setdefault(unit.key.contract_key, []).append((unit, infer(unit, params)))

    detections = []
    for contract in contract_file.contracts:
        contract_key = ContractKey(contract_file.name, contract.name)
        detection = ContractDetection(contract=contract_key)
        for unit, vector in by_contract.get(contract_key, []):
            detection.vectors[unit.key.function] = vector
            detection.matches[unit.key.function] = find_clones(
                vector, index, threshold, top_k,
                query_id=str(unit.key),
                exclude=unit.key if exclude_self else None,
            )
        detection.report = propagate_labels(detection.matches, threshold=threshold, contract=str(contract_key))
        detections.append(detection)
    return detections
