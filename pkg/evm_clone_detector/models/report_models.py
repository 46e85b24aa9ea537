"""
Report schema of the detect command.

One QueryReport is emitted per query file; `--json` prints each as one line.
"""

from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field


class CloneEntry(BaseModel):
    """A retrieved clone: index function id and cosine similarity."""
    model_config = ConfigDict(extra="forbid")

    id: str
    similarity: float


class FunctionReport(BaseModel):
    """Clones of one query function and the per-tag scores they carry."""
    model_config = ConfigDict(extra="forbid")

    name: str
    clones: List[CloneEntry] = Field(default_factory=list)
    epsilon: Dict[str, float] = Field(default_factory=dict)


class ContractReport(BaseModel):
    """Indexed contracts whose mean function vector is close to a query contract's."""
    model_config = ConfigDict(extra="forbid")

    name: str
    clones: List[CloneEntry] = Field(default_factory=list)


class PhaseTimings(BaseModel):
    """Wall-clock milliseconds per phase."""
    model_config = ConfigDict(extra="forbid")

    extract: float = 0.0
    detect: float = 0.0
    summarize: float = 0.0


class QueryReport(BaseModel):
    """Detection report of one query file."""
    model_config = ConfigDict(extra="forbid")

    query: str
    functions: List[FunctionReport] = Field(default_factory=list)
    contracts: List[ContractReport] = Field(default_factory=list)
    timing_ms: PhaseTimings = Field(default_factory=PhaseTimings)

    def contract_epsilon(self) -> Dict[str, float]:
        """Per-tag score of the whole query: the maximum over its functions."""
        scores: Dict[str, float] = {}
        for function in self.functions:
            for tag, score in function.epsilon.items():
                scores[tag] = max(scores.get(tag, 0.0), score)
        return scores

    def predicted(self, threshold: float) -> List[str]:
        return [tag for tag, score in self.contract_epsilon().items() if score >= threshold]
