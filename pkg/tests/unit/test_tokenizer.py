#!/usr/bin/env python
"""
Unit tests for the instruction tokenizer.
"""

import sys
import unittest
from pathlib import Path

# Add the parent directory to the path so we can import the modules
sys.path.append(str(Path(__file__).parent.parent.parent))

from evm_clone_detector.models.data_models import Instruction, TokenizedInstruction
from evm_clone_detector.parsers.evm_disassembler import disassemble
from evm_clone_detector.parsers.opcodes import assemble
from evm_clone_detector.parsers.tokenizer import NormalizationPolicy, operand_token, tokenize, tokenize_all


class TestTokenizer(unittest.TestCase):
    """Operation and operand tokens."""

    def test_operation_only(self):
        self.assertEqual(tokenize(Instruction(0, 0x01, "ADD")), TokenizedInstruction("ADD"))
        self.assertEqual(tokenize(Instruction(0, 0x5F, "PUSH0")), TokenizedInstruction("PUSH0"))

    def test_small_immediates_keep_their_value(self):
        self.assertEqual(tokenize(Instruction(0, 0x60, "PUSH1", b"\x05")), TokenizedInstruction("PUSH1", ("0x05",)))
        self.assertEqual(tokenize(Instruction(0, 0x61, "PUSH2", b"\x00\xff")).operands, ("0xff",))

    def test_wide_immediates_are_classes(self):
        self.assertEqual(operand_token(20, 1 << 100), "ADDR")
        self.assertEqual(operand_token(32, 1 << 200), "HASH32")
        self.assertEqual(operand_token(2, 0x1234), "CONST2")
        self.assertEqual(operand_token(4, 0xa9059cbb), "CONST4")

    def test_selector_policy(self):
        policy = NormalizationPolicy.KEEP_SELECTORS
        self.assertEqual(operand_token(4, 0xa9059cbb, policy), "0xa9059cbb")
        self.assertEqual(operand_token(4, 0x0000abcd, policy), "0x0000abcd")
        self.assertEqual(operand_token(2, 0x1234, policy), "CONST2")

    def test_policy_names(self):
        self.assertIs(NormalizationPolicy.from_string("default"), NormalizationPolicy.DEFAULT)
        self.assertIs(NormalizationPolicy.from_string(" Selectors-V1 "), NormalizationPolicy.KEEP_SELECTORS)
        with self.assertRaises(ValueError):
            NormalizationPolicy.from_string("raw")

    def test_tokens_order(self):
        code = assemble([("PUSH1", 1), ("PUSH20", 1 << 120), "ADD", "STOP"])
        tokens = tokenize_all(disassemble(code))
        self.assertEqual([t.tokens() for t in tokens],
                         [("PUSH1", "0x01"), ("PUSH20", "ADDR"), ("ADD",), ("STOP",)])


if __name__ == "__main__":
    unittest.main()
