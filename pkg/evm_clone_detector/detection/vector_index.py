"""
Function-vector index and cosine clone retrieval.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..models.data_models import CloneMatch, ContractKey, FunctionKey, LabelStore
from ..models.exceptions import DimensionMismatchError
from ..utils.logger import Logger

logger = Logger(__name__)

DEFAULT_THRESHOLD = 0.8
DEFAULT_TOP_K = 5

# Rounding slack around +-1; parallel vectors must score exactly 1
UNIT_TOLERANCE = 1e-12


def _snap(similarities):
    clipped = np.clip(similarities, -1.0, 1.0)
    return np.where(np.abs(clipped) >= 1.0 - UNIT_TOLERANCE, np.sign(clipped), clipped)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity clamped to [-1, 1]; 0 when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionMismatchError(f"cannot compare vectors of dimension {u.shape[0]} and {v.shape[0]}")
    norm = np.linalg.norm(u) * np.linalg.norm(v)
    if norm == 0.0:
        return 0.0
    return float(_snap(u @ v / norm))


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    matrix = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)


@dataclass
class VectorIndex:
    """Immutable collection of function vectors with their owning contracts' tags."""
    keys: List[FunctionKey]
    vectors: np.ndarray
    tags: Dict[ContractKey, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.keys):
            raise DimensionMismatchError(
                f"index needs one row per key: {len(self.keys)} keys, vectors of shape {self.vectors.shape}"
            )
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("index identities must be unique")
        self._unit = _unit_rows(self.vectors)
        self._unit.flags.writeable = False
        self._rows = {key: i for i, key in enumerate(self.keys)}
        self._contract_means = None

    @classmethod
    def build(cls, keys: Sequence[FunctionKey], vectors: np.ndarray,
              labels: Optional[LabelStore] = None) -> 'VectorIndex':
        """
        Build an index over function vectors.

        Args:
            keys: Function identities, one per row
            vectors: Function vectors, shape (n, 2d)
            labels: Vulnerability labels; contracts missing from it carry no tags

        Returns:
            VectorIndex
        """
        keys = list(keys)
        labels = labels if labels is not None else LabelStore()
        tags = {}
        for key in keys:
            contract = key.contract_key
            if contract not in tags:
                tags[contract] = labels.tags_for(contract.file, contract.contract)
        logger.debug(f"Indexed {len(keys)} functions of {len(tags)} contracts")
        return cls(keys, vectors, tags)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def tags_of(self, key: FunctionKey) -> frozenset:
        return self.tags.get(key.contract_key, frozenset())

    def vector(self, key: FunctionKey) -> np.ndarray:
        return self.vectors[self._rows[key]]

    def row(self, key: FunctionKey) -> Optional[int]:
        return self._rows.get(key)

    def similarities(self, query: np.ndarray) -> np.ndarray:
        """Cosine similarity of the query against every row, in row order."""
        query = np.asarray(query, dtype=np.float64).ravel()
        if query.shape[0] != self.dim:
            raise DimensionMismatchError(f"query has dimension {query.shape[0]}, index has {self.dim}")
        norm = np.linalg.norm(query)
        if norm == 0.0:
            return np.zeros(len(self.keys))
        return _snap(self._unit @ (query / norm))

    def contract_vectors(self) -> Tuple[List[ContractKey], np.ndarray]:
        """Mean function vector per contract, contracts in first-seen order."""
        if self._contract_means is None:
            self._contract_means = self._mean_per_contract()
        return self._contract_means

    def _mean_per_contract(self) -> Tuple[List[ContractKey], np.ndarray]:
        groups: Dict[ContractKey, List[int]] = {}
        for i, key in enumerate(self.keys):
            groups.setdefault(key.contract_key, []).append(i)
        contracts = list(groups)
        if not contracts:
            return [], np.zeros((0, self.dim))
        means = np.stack([self.vectors[rows].astype(np.float64).mean(axis=0) for rows in groups.values()])
        return contracts, means


def _rank(similarities: np.ndarray, identities: Sequence, threshold: float, top_k: Optional[int],
          skip: Iterable[int] = ()) -> List[Tuple[int, float]]:
    skip = set(skip)
    hits = [(i, float(similarities[i])) for i in np.flatnonzero(similarities >= threshold) if i not in skip]
    hits.sort(key=lambda hit: (-hit[1], str(identities[hit[0]])))
    return hits if top_k is None else hits[:top_k]


def find_clones(query: np.ndarray, index: VectorIndex, threshold: float = DEFAULT_THRESHOLD,
                top_k: Optional[int] = DEFAULT_TOP_K, query_id: str = "",
                exclude: Optional[FunctionKey] = None) -> List[CloneMatch]:
    """
    Retrieve indexed functions whose cosine similarity to the query reaches the threshold.

    Args:
        query: Query function vector
        index: Function index
        threshold: Minimum similarity of a clone
        top_k: Maximum number of clones (None for all)
        query_id: Identity recorded on each match
        exclude: Index identity to leave out (self-match exclusion)

    Returns:
        Matches sorted by descending similarity, ties by function id
    """
    if len(index) == 0:
        return []
    similarities = index.similarities(query)
    skip = [index.row(exclude)] if exclude is not None and index.row(exclude) is not None else []
    return [
        CloneMatch(query=query_id, match=index.keys[i], similarity=similarity, tags=index.tags_of(index.keys[i]))
        for i, similarity in _rank(similarities, index.keys, threshold, top_k, skip)
    ]


def find_contract_clones(query_vectors: np.ndarray, index: VectorIndex, threshold: float = DEFAULT_THRESHOLD,
                         top_k: Optional[int] = DEFAULT_TOP_K,
                         exclude: Optional[ContractKey] = None) -> List[Tuple[ContractKey, float]]:
    """Contract-level retrieval: the query contract's mean vector against each contract's mean."""
    query_vectors = np.asarray(query_vectors, dtype=np.float64)
    if query_vectors.ndim == 1:
        query_vectors = query_vectors[None, :]
    contracts, means = index.contract_vectors()
    if not contracts or len(query_vectors) == 0:
        return []
    query = query_vectors.mean(axis=0)
    similarities = np.array([cosine(query, mean) for mean in means])
    skip = [i for i, contract in enumerate(contracts) if contract == exclude]
    return [(contracts[i], similarity) for i, similarity in _rank(similarities, contracts, threshold, top_k, skip)]
