"""EVM opcode tables, frozen per hard-fork revision."""

import re
from typing import Dict, Iterable, Optional, Tuple, Union

from ..models.exceptions import ConfigError

DEFAULT_FORK = "shanghai"

# (name, operand_size); operand_size is only non-zero for PUSH1..PUSH32
_LONDON: Dict[int, Tuple[str, int]] = {
    # Stop & arithmetic
    0x00: ("STOP", 0),
    0x01: ("ADD", 0),
    0x02: ("MUL", 0),
    0x03: ("SUB", 0),
    0x04: ("DIV", 0),
    0x05: ("SDIV", 0),
    0x06: ("MOD", 0),
    0x07: ("SMOD", 0),
    0x08: ("ADDMOD", 0),
    0x09: ("MULMOD", 0),
    0x0A: ("EXP", 0),
    0x0B: ("SIGNEXTEND", 0),
    # Comparison & bitwise
    0x10: ("LT", 0),
    0x11: ("GT", 0),
    0x12: ("SLT", 0),
    0x13: ("SGT", 0),
    0x14: ("EQ", 0),
    0x15: ("ISZERO", 0),
    0x16: ("AND", 0),
    0x17: ("OR", 0),
    0x18: ("XOR", 0),
    0x19: ("NOT", 0),
    0x1A: ("BYTE", 0),
    0x1B: ("SHL", 0),
    0x1C: ("SHR", 0),
    0x1D: ("SAR", 0),
    0x20: ("SHA3", 0),
    # Environmental
    0x30: ("ADDRESS", 0),
    0x31: ("BALANCE", 0),
    0x32: ("ORIGIN", 0),
    0x33: ("CALLER", 0),
    0x34: ("CALLVALUE", 0),
    0x35: ("CALLDATALOAD", 0),
    0x36: ("CALLDATASIZE", 0),
    0x37: ("CALLDATACOPY", 0),
    0x38: ("CODESIZE", 0),
    0x39: ("CODECOPY", 0),
    0x3A: ("GASPRICE", 0),
    0x3B: ("EXTCODESIZE", 0),
    0x3C: ("EXTCODECOPY", 0),
    0x3D: ("RETURNDATASIZE", 0),
    0x3E: ("RETURNDATACOPY", 0),
    0x3F: ("EXTCODEHASH", 0),
    # Block
    0x40: ("BLOCKHASH", 0),
    0x41: ("COINBASE", 0),
    0x42: ("TIMESTAMP", 0),
    0x43: ("NUMBER", 0),
    0x44: ("DIFFICULTY", 0),
    0x45: ("GASLIMIT", 0),
    0x46: ("CHAINID", 0),
    0x47: ("SELFBALANCE", 0),
    0x48: ("BASEFEE", 0),
    # Stack / memory / storage / flow
    0x50: ("POP", 0),
    0x51: ("MLOAD", 0),
    0x52: ("MSTORE", 0),
    0x53: ("MSTORE8", 0),
    0x54: ("SLOAD", 0),
    0x55: ("SSTORE", 0),
    0x56: ("JUMP", 0),
    0x57: ("JUMPI", 0),
    0x58: ("PC", 0),
    0x59: ("MSIZE", 0),
    0x5A: ("GAS", 0),
    0x5B: ("JUMPDEST", 0),
    # PUSH1 through PUSH32
    **{0x60 + i: (f"PUSH{i + 1}", i + 1) for i in range(32)},
    # DUP1 through DUP16
    **{0x80 + i: (f"DUP{i + 1}", 0) for i in range(16)},
    # SWAP1 through SWAP16
    **{0x90 + i: (f"SWAP{i + 1}", 0) for i in range(16)},
    0xA0: ("LOG0", 0),
    0xA1: ("LOG1", 0),
    0xA2: ("LOG2", 0),
    0xA3: ("LOG3", 0),
    0xA4: ("LOG4", 0),
    # System
    0xF0: ("CREATE", 0),
    0xF1: ("CALL", 0),
    0xF2: ("CALLCODE", 0),
    0xF3: ("RETURN", 0),
    0xF4: ("DELEGATECALL", 0),
    0xF5: ("CREATE2", 0),
    0xFA: ("STATICCALL", 0),
    0xFD: ("REVERT", 0),
    0xFE: ("INVALID", 0),
    0xFF: ("SELFDESTRUCT", 0),
}

_PARIS = {**_LONDON, 0x44: ("PREVRANDAO", 0)}
_SHANGHAI = {**_PARIS, 0x5F: ("PUSH0", 0)}
_CANCUN = {
    **_SHANGHAI,
    0x49: ("BLOBHASH", 0),
    0x4A: ("BLOBBASEFEE", 0),
    0x5C: ("TLOAD", 0),
    0x5D: ("TSTORE", 0),
    0x5E: ("MCOPY", 0),
}

FORKS: Dict[str, Dict[int, Tuple[str, int]]] = {
    "london": _LONDON,
    "paris": _PARIS,
    "shanghai": _SHANGHAI,
    "cancun": _CANCUN,
}

# Instructions after which execution never falls through
HALTING = frozenset({"STOP", "JUMP", "RETURN", "REVERT", "SELFDESTRUCT", "INVALID"})
# Instructions that end a basic block
BLOCK_ENDING = HALTING | {"JUMPI"}

_UNKNOWN_PATTERN = re.compile(r"^INVALID\(0x([0-9A-Fa-f]{2})\)$")


def opcode_table(fork: str = DEFAULT_FORK) -> Dict[int, Tuple[str, int]]:
    """Return the opcode table of a hard fork."""
    try:
        return FORKS[fork.lower()]
    except KeyError:
        raise ConfigError(f"unknown fork '{fork}', expected one of {sorted(FORKS)}") from None


def lookup(opcode: int, fork: str = DEFAULT_FORK) -> Tuple[str, int]:
    """Return (mnemonic, operand_size) for an opcode; unassigned bytes decode as INVALID(0xXX)."""
    entry = opcode_table(fork).get(opcode)
    if entry is not None:
        return entry
    return (unknown_mnemonic(opcode), 0)


def unknown_mnemonic(opcode: int) -> str:
    return f"INVALID(0x{opcode:02X})"


def is_halting(mnemonic: str) -> bool:
    return mnemonic in HALTING or mnemonic.startswith("INVALID(")


def ends_block(mnemonic: str) -> bool:
    return mnemonic in BLOCK_ENDING or mnemonic.startswith("INVALID(")


def opcode_for(mnemonic: str, fork: Optional[str] = DEFAULT_FORK) -> int:
    """Reverse lookup of a mnemonic, accepting the INVALID(0xXX) spelling.

    With fork=None every revision's names are accepted.
    """
    match = _UNKNOWN_PATTERN.match(mnemonic)
    if match:
        return int(match.group(1), 16)
    reverse = _reverse_table(fork)
    if mnemonic not in reverse:
        raise KeyError(f"mnemonic {mnemonic} not in {fork or 'any'} opcode table")
    return reverse[mnemonic]


_REVERSE_CACHE: Dict[Optional[str], Dict[str, int]] = {}


def _reverse_table(fork: Optional[str]) -> Dict[str, int]:
    key = fork.lower() if fork else None
    if key not in _REVERSE_CACHE:
        tables = FORKS.values() if key is None else [opcode_table(key)]
        _REVERSE_CACHE[key] = {name: code for table in tables for code, (name, _) in table.items()}
    return _REVERSE_CACHE[key]


Operand = Union[None, int, bytes]


def assemble(program: Iterable[Union[str, Tuple[str, Operand]]], fork: str = DEFAULT_FORK) -> bytes:
    """
    Assemble mnemonics into bytecode.

    Args:
        program: Items are a bare mnemonic or (mnemonic, operand); PUSHN operands may be
            an int (encoded big-endian on N bytes) or raw bytes of length N.
        fork: Opcode table to use

    Returns:
        The encoded byte string
    """
    out = bytearray()
    table = opcode_table(fork)
    for item in program:
        mnemonic, operand = (item, None) if isinstance(item, str) else item
        opcode = opcode_for(mnemonic, fork)
        size = table.get(opcode, ("", 0))[1]
        out.append(opcode)
        if size == 0:
            if operand is not None:
                raise ValueError(f"{mnemonic} takes no operand")
            continue
        if operand is None:
            raise ValueError(f"{mnemonic} requires a {size}-byte operand")
        data = operand.to_bytes(size, "big") if isinstance(operand, int) else bytes(operand)
        if len(data) != size:
            raise ValueError(f"{mnemonic} operand must be {size} bytes, got {len(data)}")
        out.extend(data)
    return bytes(out)
