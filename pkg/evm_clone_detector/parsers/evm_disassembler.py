"""
EVM bytecode disassembler.

Decodes runtime bytecode into an instruction stream, partitions the stream
into basic blocks and recovers function units from the selector dispatcher.
Every byte string decodes: truncated PUSH immediates read as zero and
unassigned opcodes decode as INVALID(0xXX).
"""

import re
from collections import deque
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import networkx as nx

from ..models.data_models import BasicBlock, FunctionUnit, Instruction
from ..models.exceptions import BytecodeFormatError
from ..utils.logger import Logger
from .opcodes import DEFAULT_FORK, ends_block, is_halting, lookup

logger = Logger(__name__)

_WHITESPACE = re.compile(r"\s+")
_HEX_DIGITS = re.compile(r"^[0-9a-fA-F]*$")

DISPATCH_FUNCTION = "dispatch"
ORPHAN_FUNCTION = "orphan"
MAIN_FUNCTION = "main"


def parse_bytecode(source: Union[str, bytes, bytearray]) -> bytes:
    """
    Normalise bytecode given as hex text or raw bytes.

    Args:
        source: Hex text (optional 0x prefix, whitespace ignored) or raw bytes

    Returns:
        The code bytes

    Raises:
        BytecodeFormatError: On an odd digit count or a non-hex character
    """
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)

    text = _WHITESPACE.sub("", source)
    if text[:2].lower() == "0x":
        text = text[2:]
    if not _HEX_DIGITS.match(text):
        bad = next(ch for ch in text if ch not in "0123456789abcdefABCDEF")
        raise BytecodeFormatError(f"non-hex character {bad!r} in bytecode")
    if len(text) % 2:
        raise BytecodeFormatError(f"odd number of hex digits ({len(text)})")
    return bytes.fromhex(text)


def disassemble(code: bytes, fork: str = DEFAULT_FORK) -> List[Instruction]:
    """
    Linearly decode code into instructions.

    Args:
        code: Runtime bytecode
        fork: Hard fork whose opcode table is used

    Returns:
        Ordered list of instructions covering the whole code
    """
    instructions = []
    offset = 0
    n = len(code)

    while offset < n:
        opcode = code[offset]
        mnemonic, size = lookup(opcode, fork)
        operand = code[offset + 1:offset + 1 + size]
        if len(operand) < size:
            # Code past the end reads as zero
            operand = operand + bytes(size - len(operand))
        instructions.append(Instruction(offset, opcode, mnemonic, operand))
        offset += 1 + size

    return instructions


def split_blocks(instructions: Sequence[Instruction], code_size: Optional[int] = None) -> List[BasicBlock]:
    """
    Partition an instruction stream into basic blocks.

    A block starts at offset 0, at every JUMPDEST and after every JUMP, JUMPI,
    STOP, RETURN, REVERT, SELFDESTRUCT and INVALID.

    Args:
        instructions: Output of disassemble
        code_size: Length of the original code; trims zero padding of a
            truncated final PUSH from the block bytes

    Returns:
        Ordered list of blocks with static callee edges
    """
    groups: List[List[Instruction]] = []
    current: List[Instruction] = []
    for ins in instructions:
        if ins.mnemonic == "JUMPDEST" and current:
            groups.append(current)
            current = []
        current.append(ins)
        if ends_block(ins.mnemonic):
            groups.append(current)
            current = []
    if current:
        groups.append(current)

    blocks = []
    for block_id, group in enumerate(groups):
        start = group[0].offset
        end = group[-1].next_offset
        raw = b"".join(ins.to_bytes() for ins in group)
        if code_size is not None and end > code_size:
            raw = raw[:max(0, code_size - start)]
            end = code_size
        blocks.append(BasicBlock(
            id=block_id,
            name=f"loc_{start:x}",
            start_offset=start,
            end_offset=end,
            instructions=group,
            raw_bytes=raw,
        ))

    jumpdests = {
        block.start_offset: block.id
        for block in blocks
        if block.instructions[0].mnemonic == "JUMPDEST"
    }
    for block in blocks:
        block.callees = _block_callees(block, blocks, jumpdests)

    return blocks


def _block_callees(block: BasicBlock, blocks: Sequence[BasicBlock], jumpdests: Dict[int, int]) -> List[int]:
    callees: List[int] = []
    last = block.last

    if last.mnemonic in ("JUMP", "JUMPI") and len(block.instructions) >= 2:
        previous = block.instructions[-2]
        if previous.is_push and previous.value in jumpdests:
            callees.append(jumpdests[previous.value])

    if not is_halting(last.mnemonic) and block.id + 1 < len(blocks):
        fall_through = block.id + 1
        if fall_through not in callees:
            callees.append(fall_through)

    return callees


def _match_dispatch(block: BasicBlock) -> Optional[Tuple[int, int, int]]:
    """Match `(DUP1) PUSH4 sel EQ PUSH* target JUMPI` at the end of a block.

    Returns (offset of PUSH4, selector, target offset) or None.
    """
    tail = block.instructions[-4:]
    if len(tail) < 4:
        return None
    push4, eq, push_target, jumpi = tail
    if (push4.mnemonic != "PUSH4" or eq.mnemonic != "EQ"
            or not push_target.is_push or jumpi.mnemonic != "JUMPI"):
        return None
    return push4.offset, push4.value, push_target.value


def identify_functions(blocks: Sequence[BasicBlock]) -> List[FunctionUnit]:
    """
    Recover function units from the selector dispatcher.

    Each selector found in the entry region claims the blocks reachable from
    its dispatch target that no earlier selector claimed. The remaining blocks
    reachable from offset 0 form `dispatch`, unreachable ones form `orphan`.
    Without a dispatcher the whole block list is one function, `main`.

    Args:
        blocks: Output of split_blocks

    Returns:
        Ordered list of functions: dispatch, selectors in dispatcher order, orphan
    """
    if not blocks:
        return []

    graph = nx.DiGraph()
    graph.add_nodes_from(block.id for block in blocks)
    for block in blocks:
        graph.add_edges_from((block.id, callee) for callee in block.callees)

    by_offset = {block.start_offset: block for block in blocks}
    dispatches = _scan_entry_region(blocks, by_offset)

    if not dispatches:
        return [_make_function(0, MAIN_FUNCTION, list(blocks), None)]

    claimed: Dict[int, int] = {}
    assignments: List[Tuple[str, Optional[int], Set[int]]] = []
    aliases: Dict[int, List[int]] = {}
    seen_selectors: Set[int] = set()
    for _, selector, target_id in sorted(dispatches):
        if selector in seen_selectors:
            continue
        seen_selectors.add(selector)
        reachable = {target_id} | nx.descendants(graph, target_id)
        owned = {block_id for block_id in reachable if block_id not in claimed}
        if not owned:
            owner = claimed[target_id]
            aliases.setdefault(owner, []).append(selector)
            logger.info(f"Selector 0x{selector:08x} dispatches into {assignments[owner][0]}, which already owns its blocks")
            continue
        for block_id in owned:
            claimed[block_id] = len(assignments)
        assignments.append((f"0x{selector:08x}", selector, owned))

    entry = ({0} | nx.descendants(graph, 0)) - set(claimed)
    orphans = set(graph.nodes) - set(claimed) - entry

    ordered: List[Tuple[str, Optional[int], Set[int], List[int]]] = []
    if entry:
        ordered.append((DISPATCH_FUNCTION, None, entry, []))
    for i, (name, selector, members) in enumerate(assignments):
        ordered.append((name, selector, members, aliases.get(i, [])))
    if orphans:
        ordered.append((ORPHAN_FUNCTION, None, orphans, []))

    functions = [
        _make_function(function_id, name, sorted((blocks[i] for i in members), key=lambda b: b.start_offset),
                       selector, shared)
        for function_id, (name, selector, members, shared) in enumerate(ordered)
    ]
    _link_functions(functions)
    return functions


def _scan_entry_region(blocks: Sequence[BasicBlock], by_offset: Dict[int, BasicBlock]) -> List[Tuple[int, int, int]]:
    """Walk from block 0 without entering selector targets, collecting dispatch idioms."""
    found: List[Tuple[int, int, int]] = []
    visited: Set[int] = set()
    queue = deque([0])

    while queue:
        block_id = queue.popleft()
        if block_id in visited:
            continue
        visited.add(block_id)
        block = blocks[block_id]

        target_id = None
        match = _match_dispatch(block)
        if match is not None:
            push_offset, selector, target = match
            target_block = by_offset.get(target)
            if target_block is not None and target_block.instructions[0].mnemonic == "JUMPDEST":
                target_id = target_block.id
                found.append((push_offset, selector, target_id))

        queue.extend(callee for callee in block.callees if callee != target_id)

    return found


def _make_function(function_id: int, name: str, blocks: List[BasicBlock], selector: Optional[int],
                   aliases: Optional[List[int]] = None) -> FunctionUnit:
    return FunctionUnit(
        id=function_id,
        name=name,
        start_offset=min(block.start_offset for block in blocks),
        end_offset=max(block.end_offset for block in blocks),
        blocks=blocks,
        selector=selector,
        aliases=list(aliases or []),
    )


def _link_functions(functions: List[FunctionUnit]) -> None:
    """Derive function call edges from block edges that cross function boundaries."""
    owner = {block.id: function.id for function in functions for block in function.blocks}
    for function in functions:
        callees = {
            owner[callee]
            for block in function.blocks
            for callee in block.callees
            if owner.get(callee, function.id) != function.id
        }
        function.callees = sorted(callees)


def extract_functions(code: bytes, fork: str = DEFAULT_FORK) -> List[FunctionUnit]:
    """Run disassemble, split_blocks and identify_functions on code."""
    instructions = disassemble(code, fork)
    blocks = split_blocks(instructions, code_size=len(code))
    return identify_functions(blocks)
