"""
Data models for the EVM clone detector.

This module defines the core data structures used throughout the system:
the decoded instruction stream, the four-level contract-file hierarchy
(file, contract, function, block), tokenized instructions, vulnerability
labels, training units and the detection results.
"""

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Instruction:
    """A single decoded EVM instruction."""
    offset: int
    opcode: int
    mnemonic: str
    operand: bytes = b""

    @property
    def size(self) -> int:
        """Number of code bytes the instruction occupies (opcode + immediate)."""
        return 1 + len(self.operand)

    @property
    def next_offset(self) -> int:
        return self.offset + self.size

    @property
    def value(self) -> Optional[int]:
        """Immediate as a big-endian integer, or None when there is no operand.

        PUSH0 has no operand bytes but pushes the constant zero.
        """
        if self.operand:
            return int.from_bytes(self.operand, "big")
        if self.mnemonic == "PUSH0":
            return 0
        return None

    @property
    def is_push(self) -> bool:
        return self.mnemonic.startswith("PUSH")

    def to_bytes(self) -> bytes:
        return bytes([self.opcode]) + self.operand

    def __str__(self) -> str:
        if self.operand:
            return f"{self.offset}: {self.mnemonic} 0x{self.operand.hex()}"
        return f"{self.offset}: {self.mnemonic}"


@dataclass
class BasicBlock:
    """Maximal straight-line run of instructions (one entry, one exit)."""
    id: int
    name: str
    start_offset: int
    end_offset: int
    instructions: List[Instruction]
    raw_bytes: bytes
    callees: List[int] = field(default_factory=list)

    @property
    def last(self) -> Instruction:
        return self.instructions[-1]


@dataclass
class FunctionUnit:
    """A function recovered from the selector dispatcher (or a synthetic one)."""
    id: int
    name: str
    start_offset: int
    end_offset: int
    blocks: List[BasicBlock]
    callees: List[int] = field(default_factory=list)
    selector: Optional[int] = None
    # Selectors that dispatch into this function's blocks after it claimed them
    aliases: List[int] = field(default_factory=list)

    def instructions(self) -> List[Instruction]:
        """Instructions of all blocks, blocks taken in schema order."""
        return [ins for block in self.blocks for ins in block.instructions]


@dataclass
class Contract:
    """One bytecode blob; library code is modelled as its own contract."""
    name: str
    functions: List[FunctionUnit] = field(default_factory=list)

    def code(self) -> bytes:
        """Reassemble the original code bytes from the block partition."""
        blocks = sorted(
            (block for function in self.functions for block in function.blocks),
            key=lambda block: block.start_offset,
        )
        return b"".join(block.raw_bytes for block in blocks)


@dataclass
class ContractFile:
    """A contract file: the top of the extraction hierarchy."""
    name: str
    md5: str
    contracts: List[Contract] = field(default_factory=list)

    def code(self) -> bytes:
        return b"".join(contract.code() for contract in self.contracts)

    def verify_md5(self) -> bool:
        """Recompute the digest over the input bytes and compare with the stored one."""
        return hashlib.md5(self.code()).hexdigest() == self.md5

    def iter_functions(self) -> Iterator[Tuple[Contract, FunctionUnit]]:
        for contract in self.contracts:
            for function in contract.functions:
                yield contract, function


@dataclass(frozen=True)
class TokenizedInstruction:
    """Operation token plus operand tokens of one instruction."""
    operation: str
    operands: Tuple[str, ...] = ()

    def tokens(self) -> Tuple[str, ...]:
        """Tokens in training order: operation first, then operands."""
        return (self.operation,) + self.operands


class VulnerabilityTag(str, Enum):
    """Vulnerability taxonomy used for labels and predictions."""
    REENTRANCY = "Reentrancy"
    TIME_DEPENDENCY = "TimeDependency"
    ERC20_TRANSFER = "ERC20Transfer"
    GAS_CONSUMPTION = "GasConsumption"
    IMPLICIT_VISIBILITY = "ImplicitVisibility"
    INTEGER_OVERFLOW = "IntegerOverflow"
    INTEGER_UNDERFLOW = "IntegerUnderflow"

    @property
    def severity(self) -> int:
        return _SEVERITIES[self]

    @property
    def description(self) -> str:
        return _DESCRIPTIONS[self]

    @classmethod
    def from_string(cls, value: str) -> 'VulnerabilityTag':
        """Convert a tag name to the enum; raises ValueError outside the taxonomy."""
        return cls(value.strip())


_SEVERITIES = {
    VulnerabilityTag.REENTRANCY: 3,
    VulnerabilityTag.TIME_DEPENDENCY: 2,
    VulnerabilityTag.ERC20_TRANSFER: 1,
    VulnerabilityTag.GAS_CONSUMPTION: 1,
    VulnerabilityTag.IMPLICIT_VISIBILITY: 1,
    VulnerabilityTag.INTEGER_OVERFLOW: 1,
    VulnerabilityTag.INTEGER_UNDERFLOW: 1,
}

_DESCRIPTIONS = {
    VulnerabilityTag.REENTRANCY: "External contracts should be called after all local state updates",
    VulnerabilityTag.TIME_DEPENDENCY: "Miners can alter timestamps; critical code should not depend on them",
    VulnerabilityTag.ERC20_TRANSFER: "Throws where the ERC20 standard expects a bool return",
    VulnerabilityTag.GAS_CONSUMPTION: "A transaction can exceed the block gas limit",
    VulnerabilityTag.IMPLICIT_VISIBILITY: "Functions are public by default; visibility should be explicit",
    VulnerabilityTag.INTEGER_OVERFLOW: "Arithmetic result is not checked for overflow",
    VulnerabilityTag.INTEGER_UNDERFLOW: "Arithmetic result is not checked for underflow",
}

TAXONOMY: Tuple[VulnerabilityTag, ...] = tuple(VulnerabilityTag)


class ContractKey(NamedTuple):
    """Identity of a contract: (contract-file name, contract name)."""
    file: str
    contract: str

    def __str__(self) -> str:
        return f"{self.file}:{self.contract}"


class FunctionKey(NamedTuple):
    """Identity of a function: (contract-file name, contract name, function name)."""
    file: str
    contract: str
    function: str

    @property
    def contract_key(self) -> ContractKey:
        return ContractKey(self.file, self.contract)

    def __str__(self) -> str:
        return f"{self.file}:{self.contract}:{self.function}"


def file_aliases(name: str) -> Tuple[str, ...]:
    """A file is known by its given name and without its suffix (`x/a.hex` -> `x/a`)."""
    directory, _, leaf = name.rpartition("/")
    if "." not in leaf:
        return (name,)
    stem = leaf.rsplit(".", 1)[0]
    return (name, f"{directory}/{stem}" if directory else stem)


class LabelStore(Mapping[ContractKey, FrozenSet[VulnerabilityTag]]):
    """Immutable mapping from contract identity to its vulnerability tags."""

    def __init__(self, entries: Optional[Mapping[Tuple[str, str], Iterable[VulnerabilityTag]]] = None):
        self._entries: Dict[ContractKey, FrozenSet[VulnerabilityTag]] = {}
        self._aliases: Dict[ContractKey, ContractKey] = {}
        for (file_name, contract_name), tags in (entries or {}).items():
            key = ContractKey(file_name, contract_name)
            self._entries[key] = frozenset(VulnerabilityTag(tag) for tag in tags)
            for alias in file_aliases(file_name):
                self._aliases.setdefault(ContractKey(alias, contract_name), key)

    def __getitem__(self, key: Tuple[str, str]) -> FrozenSet[VulnerabilityTag]:
        return self._entries[ContractKey(*key)]

    def __iter__(self) -> Iterator[ContractKey]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def tags_for(self, file_name: str, contract_name: str) -> FrozenSet[VulnerabilityTag]:
        """Tags of a contract, matching the file by name or stem; empty when unlabelled."""
        for alias in file_aliases(file_name):
            key = self._aliases.get(ContractKey(alias, contract_name))
            if key is not None:
                return self._entries[key]
        return frozenset()


@dataclass(frozen=True)
class Hyperparameters:
    """Training and inference hyperparameters."""
    dim: int = 100
    negative: int = 25
    alpha: float = 0.025
    min_alpha_ratio: float = 0.01
    epochs: int = 10
    infer_epochs: Optional[int] = None
    min_count: int = 1
    seed: int = 1
    workers: int = 1

    @property
    def effective_infer_epochs(self) -> int:
        return self.epochs if self.infer_epochs is None else self.infer_epochs

    @property
    def min_alpha(self) -> float:
        return self.alpha * self.min_alpha_ratio


@dataclass
class TrainingUnit:
    """One function flattened to its instruction sequence, with vocabulary ids."""
    key: FunctionKey
    instructions: List[TokenizedInstruction]
    operation_ids: np.ndarray
    operand_ids: List[np.ndarray]

    def __len__(self) -> int:
        return len(self.instructions)

    def target_ids(self, j: int) -> List[int]:
        """Token ids of instruction j in training order."""
        return [int(self.operation_ids[j])] + [int(t) for t in self.operand_ids[j]]


@dataclass(frozen=True)
class CloneMatch:
    """A retrieved clone of a query function."""
    query: str
    match: FunctionKey
    similarity: float
    tags: FrozenSet[VulnerabilityTag] = frozenset()


@dataclass
class VulnerabilityReport:
    """Per-tag scores and supporting evidence for one analysed contract."""
    contract: str
    epsilon: Dict[VulnerabilityTag, float]
    evidence: Dict[VulnerabilityTag, List[CloneMatch]]
    threshold: float = 0.8

    @property
    def predicted(self) -> List[VulnerabilityTag]:
        """Tags whose score reaches the threshold, most severe first."""
        tags = [tag for tag in TAXONOMY if self.epsilon.get(tag, 0.0) >= self.threshold]
        return sorted(tags, key=lambda tag: -tag.severity)
