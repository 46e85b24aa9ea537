"""
Vulnerability-label propagation from clone matches to a test contract.
"""

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

from ..models.data_models import TAXONOMY, CloneMatch, LabelStore, VulnerabilityReport, VulnerabilityTag
from .vector_index import DEFAULT_THRESHOLD

MatchesByFunction = Union[Mapping[str, Sequence[CloneMatch]], Iterable[Sequence[CloneMatch]]]


def propagate_labels(matches: MatchesByFunction, labels: Optional[LabelStore] = None,
                     threshold: float = DEFAULT_THRESHOLD, contract: str = "") -> VulnerabilityReport:
    """
    Score each tag by the best similarity among matches into contracts carrying it.

    Args:
        matches: Clone matches of every function of the test contract
        labels: Labels of the indexed contracts; when None the tags recorded on each match are used
        threshold: A tag is predicted when its score reaches this value
        contract: Name of the test contract for the report

    Returns:
        VulnerabilityReport with a score (0 without evidence) for every taxonomy tag
    """
    groups = matches.values() if isinstance(matches, Mapping) else matches
    epsilon: Dict[VulnerabilityTag, float] = {tag: 0.0 for tag in TAXONOMY}
    evidence: Dict[VulnerabilityTag, List[CloneMatch]] = {tag: [] for tag in TAXONOMY}

    for function_matches in groups:
        for match in function_matches:
            if labels is not None:
                tags = labels.tags_for(match.match.file, match.match.contract)
            else:
                tags = match.tags
            for tag in tags:
                evidence[tag].append(match)
                epsilon[tag] = max(epsilon[tag], min(1.0, max(0.0, match.similarity)))

    for tag in TAXONOMY:
        evidence[tag].sort(key=lambda m: (-m.similarity, str(m.match)))
    return VulnerabilityReport(contract=contract, epsilon=epsilon, evidence=evidence, threshold=threshold)
