#!/usr/bin/env python
"""
Unit tests for the EVM disassembler.

Covers opcode decoding per fork, PUSH immediates, block partitioning and
function recovery from the selector dispatcher.
"""

import sys
import unittest
from pathlib import Path

import numpy as np

# Add the parent directory to the path so we can import the modules
sys.path.append(str(Path(__file__).parent.parent.parent))

from evm_clone_detector.models.data_models import Contract
from evm_clone_detector.models.exceptions import BytecodeFormatError, ConfigError
from evm_clone_detector.parsers.evm_disassembler import (
    disassemble, extract_functions, identify_functions, parse_bytecode, split_blocks
)
from evm_clone_detector.parsers.opcodes import FORKS, assemble, lookup, opcode_table
from tests.data.sample_bytecode import (
    BALANCE_OF_SELECTOR, TRANSFER_SELECTOR, dispatcher_contract, shared_target_contract, straight_line
)


class TestOpcodeTables(unittest.TestCase):
    """Opcode tables of each supported fork."""

    def test_table_sizes(self):
        self.assertEqual(len(opcode_table("london")), 143)
        self.assertEqual(len(opcode_table("paris")), 143)
        self.assertEqual(len(opcode_table("shanghai")), 144)
        self.assertEqual(len(opcode_table("cancun")), 149)

    def test_fork_differences(self):
        self.assertEqual(lookup(0x44, "london"), ("DIFFICULTY", 0))
        self.assertEqual(lookup(0x44, "paris"), ("PREVRANDAO", 0))
        self.assertEqual(lookup(0x5F, "london"), ("INVALID(0x5F)", 0))
        self.assertEqual(lookup(0x5F, "shanghai"), ("PUSH0", 0))
        self.assertEqual(lookup(0x5C, "shanghai"), ("INVALID(0x5C)", 0))
        self.assertEqual(lookup(0x5C, "cancun"), ("TLOAD", 0))

    def test_every_byte_decodes_on_every_fork(self):
        for fork, table in FORKS.items():
            for opcode in range(256):
                code = bytes([opcode]) + bytes(32)
                first = disassemble(code, fork)[0]
                self.assertEqual(first.opcode, opcode)
                if opcode in table:
                    name, size = table[opcode]
                    self.assertEqual(first.mnemonic, name)
                    self.assertEqual(len(first.operand), size)
                else:
                    self.assertEqual(first.mnemonic, f"INVALID(0x{opcode:02X})")
                    self.assertEqual(first.operand, b"")

    def test_push_widths(self):
        for width in range(1, 33):
            _, size = lookup(0x5F + width)
            self.assertEqual(size, width)

    def test_unknown_fork(self):
        with self.assertRaises(ConfigError):
            opcode_table("frontier")

    def test_assemble_rejects_bad_operands(self):
        with self.assertRaises(ValueError):
            assemble([("PUSH2", b"\x01")])
        with self.assertRaises(ValueError):
            assemble([("ADD", 1)])
        with self.assertRaises(ValueError):
            assemble(["PUSH1"])


class TestParseBytecode(unittest.TestCase):
    """Hex text normalisation."""

    def test_prefix_and_whitespace(self):
        self.assertEqual(parse_bytecode("0x6001"), b"\x60\x01")
        self.assertEqual(parse_bytecode(" 60 01\n"), b"\x60\x01")
        self.assertEqual(parse_bytecode("0X60AB"), b"\x60\xab")
        self.assertEqual(parse_bytecode(""), b"")

    def test_raw_bytes_pass_through(self):
        self.assertEqual(parse_bytecode(bytearray(b"\x00\x01")), b"\x00\x01")

    def test_odd_digit_count(self):
        with self.assertRaises(BytecodeFormatError):
            parse_bytecode("0x601")

    def test_non_hex_character(self):
        with self.assertRaises(BytecodeFormatError):
            parse_bytecode("60zz")


class TestDisassemble(unittest.TestCase):
    """Linear decoding."""

    def test_straight_line(self):
        instructions = disassemble(straight_line())
        self.assertEqual([ins.mnemonic for ins in instructions], ["PUSH1", "PUSH1", "ADD", "STOP"])
        self.assertEqual([ins.offset for ins in instructions], [0, 2, 4, 5])
        self.assertEqual(instructions[1].value, 2)
        self.assertEqual(str(instructions[0]), "0: PUSH1 0x01")
        self.assertEqual(str(instructions[2]), "4: ADD")

    def test_push0_has_value_zero(self):
        instructions = disassemble(b"\x5f\x00")
        self.assertEqual(instructions[0].mnemonic, "PUSH0")
        self.assertEqual(instructions[0].value, 0)
        self.assertEqual(instructions[0].size, 1)

    def test_truncated_push_reads_zero(self):
        instructions = disassemble(b"\x01\x61\xab")
        self.assertEqual(len(instructions), 2)
        push = instructions[1]
        self.assertEqual(push.mnemonic, "PUSH2")
        self.assertEqual(push.operand, b"\xab\x00")
        self.assertEqual(push.value, 0xab00)

    def test_truncated_push_block_bytes_are_trimmed(self):
        code = b"\x01\x61\xab"
        blocks = split_blocks(disassemble(code), code_size=len(code))
        self.assertEqual(len(blocks), 1)
        self.assertEqual(blocks[0].raw_bytes, code)
        self.assertEqual(blocks[0].end_offset, 3)

    def test_empty_code(self):
        self.assertEqual(disassemble(b""), [])
        self.assertEqual(extract_functions(b""), [])


class TestSplitBlocks(unittest.TestCase):
    """Basic-block partitioning."""

    def test_unassigned_opcode_ends_block(self):
        blocks = split_blocks(disassemble(b"\x0c\x60\x00"))
        self.assertEqual([(b.start_offset, b.end_offset) for b in blocks], [(0, 1), (1, 3)])
        self.assertEqual(blocks[0].last.mnemonic, "INVALID(0x0C)")
        self.assertEqual(blocks[0].callees, [])

    def test_jumpdest_starts_block(self):
        code = assemble([("PUSH1", 1), "JUMPDEST", "STOP"])
        blocks = split_blocks(disassemble(code))
        self.assertEqual([b.name for b in blocks], ["loc_0", "loc_2"])
        # No jump: the first block falls through
        self.assertEqual(blocks[0].callees, [1])

    def test_dispatcher_blocks(self):
        code = dispatcher_contract()
        blocks = split_blocks(disassemble(code), code_size=len(code))
        self.assertEqual([b.start_offset for b in blocks], [0, 16, 26, 30, 35, 47])
        self.assertEqual([b.end_offset for b in blocks], [16, 26, 30, 35, 47, 49])
        self.assertEqual([b.name for b in blocks], ["loc_0", "loc_10", "loc_1a", "loc_1e", "loc_23", "loc_2f"])
        self.assertEqual(blocks[0].callees, [3, 1])
        self.assertEqual(blocks[1].callees, [4, 2])
        for block in blocks[2:]:
            self.assertEqual(block.callees, [])

    def test_blocks_cover_code_exactly(self):
        rng = np.random.default_rng(2024)
        for _ in range(10000):
            code = rng.bytes(int(rng.integers(0, 65)))
            blocks = split_blocks(disassemble(code), code_size=len(code))
            self.assertEqual(b"".join(b.raw_bytes for b in blocks), code)
            for previous, block in zip(blocks, blocks[1:]):
                self.assertEqual(previous.end_offset, block.start_offset)


class TestIdentifyFunctions(unittest.TestCase):
    """Function recovery."""

    def test_dispatcher_functions(self):
        functions = extract_functions(dispatcher_contract())
        self.assertEqual(
            [f.name for f in functions],
            ["dispatch", f"0x{TRANSFER_SELECTOR:08x}", f"0x{BALANCE_OF_SELECTOR:08x}", "orphan"],
        )
        self.assertEqual([[b.start_offset for b in f.blocks] for f in functions], [[0, 16, 26], [30], [35], [47]])
        self.assertEqual([f.id for f in functions], [0, 1, 2, 3])
        self.assertEqual(functions[1].selector, TRANSFER_SELECTOR)
        self.assertIsNone(functions[0].selector)
        self.assertEqual(functions[0].callees, [1, 2])
        self.assertEqual((functions[0].start_offset, functions[0].end_offset), (0, 30))

    def test_shared_target_claims_once(self):
        functions = extract_functions(shared_target_contract())
        self.assertEqual([f.name for f in functions], ["dispatch", "0x11111111"])
        self.assertEqual([[b.start_offset for b in f.blocks] for f in functions], [[0, 13, 23], [24]])
        self.assertEqual(functions[1].aliases, [0x22222222])
        self.assertEqual(functions[0].aliases, [])

    def test_shared_target_is_logged(self):
        with self.assertLogs("evm_clone_detector.parsers.evm_disassembler", level="INFO") as logs:
            extract_functions(shared_target_contract())
        self.assertTrue(any("0x22222222" in line and "0x11111111" in line for line in logs.output))

    def test_no_dispatcher_gives_main(self):
        functions = extract_functions(straight_line())
        self.assertEqual(len(functions), 1)
        self.assertEqual(functions[0].name, "main")
        self.assertEqual(functions[0].callees, [])

    def test_identify_empty(self):
        self.assertEqual(identify_functions([]), [])

    def test_functions_partition_code(self):
        rng = np.random.default_rng(99)
        prefix = dispatcher_contract()
        for _ in range(500):
            code = prefix + rng.bytes(int(rng.integers(0, 40)))
            contract = Contract(name="main", functions=extract_functions(code))
            self.assertEqual(contract.code(), code)
            block_ids = [b.id for f in contract.functions for b in f.blocks]
            self.assertEqual(len(block_ids), len(set(block_ids)))


if __name__ == "__main__":
    unittest.main()
