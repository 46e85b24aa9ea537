"""
Seeded synthetic corpus generator.

Every contract opens with a selector dispatcher that jumps to one body per
selector, followed by the bodies and an unreachable revert stub, so that
function recovery finds `dispatch`, one function per selector and `orphan`.

A body is straight-line code drawn from a pool shared by all templates: each
body picks a few opcodes from a common pool, a few PUSH1 constants and two of
the common wide PUSH widths. Bodies of different templates therefore overlap
in vocabulary and differ mainly in how they combine it. Variants delete a few
statements from their template's bodies (type-III rewrites). Every template
carries one vulnerability tag, cycling through the taxonomy.
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..models.data_models import TAXONOMY, ContractFile, LabelStore, VulnerabilityTag
from ..parsers.evm_disassembler import DISPATCH_FUNCTION, ORPHAN_FUNCTION
from ..parsers.extractor import DEFAULT_CONTRACT, build_contract_file
from ..parsers.label_parser import labels_to_frame
from ..parsers.opcodes import DEFAULT_FORK, assemble
from .logger import Logger

logger = Logger(__name__)

FUNCTIONS = 2
OPS_PER_BODY = 8
CONSTANTS_PER_BODY = 6
STATEMENTS = 30
BLOCK_EVERY = 10
DELETIONS = 2

# Opcodes valid on every supported fork that never alter control flow
SHARED_OPS = (
    "ADD", "MUL", "SUB", "DIV", "MOD", "EXP", "AND", "OR", "XOR", "NOT", "ISZERO", "LT", "GT", "EQ",
    "SHL", "SHR", "BYTE", "DUP1", "DUP2", "DUP3", "SWAP1", "SWAP2", "POP", "MLOAD", "MSTORE",
    "SLOAD", "SSTORE", "CALLER", "CALLVALUE", "ADDRESS", "GAS",
)
# PUSH widths besides PUSH1; their immediates tokenize to shared class tokens
WIDE_WIDTHS = (2, 4, 20, 32)
WIDE_PUSH_SHARE = 0.4

Statement = List[Union[str, Tuple[str, int]]]
Program = List[Union[str, Tuple[str, int]]]

_ORPHAN_STUB: Program = ["JUMPDEST", ("PUSH1", 0), "DUP1", "REVERT"]


@dataclass(frozen=True)
class SyntheticContract:
    """One generated contract file."""
    name: str
    template: int
    variant: int
    code: bytes
    tag: VulnerabilityTag
    selectors: Tuple[int, ...] = ()

    @property
    def group(self) -> str:
        return f"t{self.template:02d}"

    @property
    def selector_functions(self) -> Tuple[str, ...]:
        return tuple(f"0x{selector:08x}" for selector in self.selectors)

    @property
    def function_names(self) -> Tuple[str, ...]:
        """Names function recovery gives the contract's functions, in order."""
        return (DISPATCH_FUNCTION,) + self.selector_functions + (ORPHAN_FUNCTION,)


def template_statements(rng: np.random.Generator, statements: int = STATEMENTS) -> List[Statement]:
    """
    Statements of one function body.

    A statement pushes one constant and applies one to three of the body's
    opcodes; a JUMPDEST opens every BLOCK_EVERY-th statement. Constants are
    the body's PUSH1 values or, for a share of statements, a wide immediate
    of one of the body's two wide widths.
    """
    ops = [str(op) for op in rng.choice(SHARED_OPS, size=OPS_PER_BODY, replace=False)]
    constants = [int(c) for c in rng.choice(256, size=CONSTANTS_PER_BODY, replace=False)]
    widths = [int(w) for w in rng.choice(WIDE_WIDTHS, size=2, replace=False)]
    body: List[Statement] = []
    for s in range(statements):
        statement: Statement = ["JUMPDEST"] if s and s % BLOCK_EVERY == 0 else []
        if rng.random() < WIDE_PUSH_SHARE:
            width = widths[int(rng.integers(0, 2))]
            statement.append((f"PUSH{width}", int.from_bytes(rng.bytes(width), "big") | 0x100))
        else:
            statement.append(("PUSH1", constants[int(rng.integers(0, CONSTANTS_PER_BODY))]))
        statement.extend(ops[i] for i in rng.integers(0, OPS_PER_BODY, size=int(rng.integers(1, 4))))
        body.append(statement)
    return body


def draw_selectors(rng: np.random.Generator, count: int = FUNCTIONS) -> Tuple[int, ...]:
    """Distinct 4-byte selectors, each wider than one byte."""
    selectors: List[int] = []
    while len(selectors) < count:
        selector = int(rng.integers(0x01000000, 0x100000000))
        if selector not in selectors:
            selectors.append(selector)
    return tuple(selectors)


def delete_statements(body: Sequence[Statement], rng: np.random.Generator, deletions: int = DELETIONS) -> List[Statement]:
    """Remove `deletions` statements (never the first), keeping block openers in place."""
    if deletions <= 0 or len(body) <= deletions + 1:
        return list(body)
    dropped = set(int(i) for i in rng.choice(np.arange(1, len(body)), size=deletions, replace=False))
    kept: List[Statement] = []
    for i, statement in enumerate(body):
        if i not in dropped:
            kept.append(list(statement))
        elif statement and statement[0] == "JUMPDEST":
            kept.append(["JUMPDEST"])
    return kept


def split_deletions(deletions: int, bodies: int) -> List[int]:
    """Spread deletions over the bodies, earlier bodies taking the remainder."""
    return [deletions // bodies + (i < deletions % bodies) for i in range(bodies)]


def body_program(body: Sequence[Statement]) -> Program:
    """A body as a jump target: JUMPDEST, its statements, STOP."""
    return ["JUMPDEST"] + [item for statement in body for item in statement] + ["STOP"]


def dispatcher_program(selectors: Sequence[int], targets: Sequence[int]) -> Program:
    """Load the selector from calldata, compare against each one, revert on no match."""
    program: Program = [("PUSH1", 0), "CALLDATALOAD", ("PUSH1", 0xE0), "SHR"]
    for selector, target in zip(selectors, targets):
        program += ["DUP1", ("PUSH4", selector), "EQ", ("PUSH2", target), "JUMPI"]
    return program + [("PUSH1", 0), "DUP1", "REVERT"]


def assemble_contract(selectors: Sequence[int], bodies: Sequence[Sequence[Statement]],
                      fork: str = DEFAULT_FORK) -> bytes:
    """Dispatcher, then one body per selector, then the orphan stub."""
    codes = [assemble(body_program(body), fork) for body in bodies]
    # Dispatcher length does not depend on the target values
    offset = len(assemble(dispatcher_program(selectors, [0] * len(selectors)), fork))
    targets = []
    for code in codes:
        targets.append(offset)
        offset += len(code)
    if offset > 0xFFFF:
        raise ValueError(f"contract of {offset} bytes exceeds the PUSH2 jump range")
    return assemble(dispatcher_program(selectors, targets), fork) + b"".join(codes) + assemble(_ORPHAN_STUB, fork)


def generate_corpus(templates: int = 20, variants: int = 3, statements: int = STATEMENTS,
                    deletions: int = DELETIONS, seed: int = 7) -> List[SyntheticContract]:
    """
    Generate templates x variants contracts, named `t{template:02d}_v{variant}`.

    Args:
        templates: Number of templates
        variants: Rewrite variants per template
        statements: Statements per function body
        deletions: Statements deleted per variant, spread over its bodies
        seed: Generator seed

    Returns:
        Contracts in (template, variant) order
    """
    rng = np.random.default_rng(seed)
    contracts = []
    for t in range(templates):
        selectors = draw_selectors(rng)
        bodies = [template_statements(rng, statements) for _ in selectors]
        tag = TAXONOMY[t % len(TAXONOMY)]
        for v in range(variants):
            shares = split_deletions(deletions, len(bodies))
            rewritten = [delete_statements(body, rng, n) for body, n in zip(bodies, shares)]
            code = assemble_contract(selectors, rewritten)
            contracts.append(SyntheticContract(f"t{t:02d}_v{v}", t, v, code, tag, selectors))
    logger.debug(f"Generated {len(contracts)} synthetic contracts ({templates} templates x {variants} variants)")
    return contracts


def to_contract_files(contracts: Sequence[SyntheticContract], fork: str = DEFAULT_FORK) -> List[ContractFile]:
    return [build_contract_file(contract.name, contract.code, fork) for contract in contracts]


def to_label_store(contracts: Sequence[SyntheticContract]) -> LabelStore:
    return LabelStore({(contract.name, DEFAULT_CONTRACT): [contract.tag] for contract in contracts})


def clone_groups(contracts: Sequence[SyntheticContract]) -> dict:
    return {contract.name: contract.group for contract in contracts}


def write_corpus(out_dir: Union[str, os.PathLike], contracts: Sequence[SyntheticContract],
                 labels_name: str = "labels.csv", groups_name: Optional[str] = "clone_groups.csv") -> Path:
    """
    Write `<name>.hex` files plus the labels CSV and clone-group CSV.

    Returns:
        The output directory
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for contract in contracts:
        (out / f"{contract.name}.hex").write_text(contract.code.hex() + "\n", encoding="utf-8")

    labels_to_frame(to_label_store(contracts)).to_csv(out / labels_name, index=False, lineterminator="\n")
    if groups_name:
        groups = pd.DataFrame([{"file": c.name, "group": c.group} for c in contracts], columns=["file", "group"])
        groups.to_csv(out / groups_name, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(contracts)} synthetic contracts to {out}")
    return out
