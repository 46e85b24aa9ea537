#!/usr/bin/env python
"""
Unit tests for contract-file extraction and the schema JSON codec.
"""

import json
import os
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

# Add the parent directory to the path so we can import the modules
sys.path.append(str(Path(__file__).parent.parent.parent))

from evm_clone_detector.models.exceptions import BytecodeFormatError, SchemaError
from evm_clone_detector.parsers.extractor import build_contract_file, read_contract_blobs
from evm_clone_detector.parsers.schema_parser import (
    deserialize, read_schema_file, serialize, write_schema_file
)
from tests.data.sample_bytecode import dispatcher_contract, multi_contract_text, straight_line


class TestExtractor(unittest.TestCase):
    """Building the file / contract / function / block hierarchy."""

    def test_md5_of_input_bytes(self):
        contract_file = build_contract_file("abc", b"abc")
        self.assertEqual(contract_file.md5, "900150983cd24fb0d6963f7d28e17f72")
        self.assertTrue(contract_file.verify_md5())

    def test_single_blob_is_main(self):
        contract_file = build_contract_file("dispatcher", dispatcher_contract())
        self.assertEqual([c.name for c in contract_file.contracts], ["main"])
        self.assertEqual(len(contract_file.contracts[0].functions), 4)

    def test_empty_code_has_no_contracts(self):
        contract_file = build_contract_file("empty", "")
        self.assertEqual(contract_file.contracts, [])
        self.assertEqual(contract_file.md5, "d41d8cd98f00b204e9800998ecf8427e")

    def test_multi_contract_text(self):
        blobs = read_contract_blobs(multi_contract_text())
        self.assertEqual([name for name, _ in blobs], ["Token", "SafeMath"])
        contract_file = build_contract_file("token", blobs)
        self.assertEqual([c.name for c in contract_file.contracts], ["Token", "SafeMath"])
        self.assertTrue(contract_file.verify_md5())

    def test_plain_hex_text_is_one_blob(self):
        blobs = read_contract_blobs("# comment\n0x6001\n6002\n")
        self.assertEqual(blobs, [("main", b"\x60\x01\x60\x02")])

    def test_malformed_text(self):
        with self.assertRaises(BytecodeFormatError):
            read_contract_blobs("0x60g1")


class TestSchemaCodec(unittest.TestCase):
    """Serialisation of ContractFiles to schema JSON."""

    def test_field_names(self):
        document = json.loads(serialize(build_contract_file("dispatcher", dispatcher_contract())))
        data = document["data"]
        self.assertEqual(set(data), {"name", "md5", "functions"})
        function = data["functions"][0]
        self.assertEqual(set(function), {"name", "sea", "see", "id", "call", "blocks"})
        self.assertEqual(function["name"], "main::dispatch")
        self.assertEqual(function["call"], [1, 2])
        block = function["blocks"][0]
        self.assertEqual(set(block), {"name", "bytes", "sea", "eea", "id", "call", "src"})
        self.assertEqual(block["name"], "loc_0")
        self.assertEqual(block["src"][0], "0: PUSH1 0x00")
        self.assertEqual(block["call"], [3, 1])

    def test_serialisation_is_deterministic(self):
        code = dispatcher_contract()
        first = serialize(build_contract_file("d", code))
        second = serialize(build_contract_file("d", code))
        self.assertEqual(first, second)

    def test_round_trip_fuzz(self):
        rng = np.random.default_rng(5)
        prefix = dispatcher_contract()
        for i in range(1000):
            tail = rng.bytes(int(rng.integers(0, 48)))
            code = prefix + tail if i % 2 else tail
            if i % 7 == 0:
                contract_file = build_contract_file(f"f{i}", [("Lib", tail), ("Main", prefix)])
            else:
                contract_file = build_contract_file(f"f{i}", code)
            payload = serialize(contract_file)
            restored = deserialize(payload)
            self.assertEqual(restored, contract_file)
            self.assertEqual(serialize(restored), payload)
            self.assertTrue(restored.verify_md5())

    def test_file_round_trip(self):
        contract_file = build_contract_file("line", straight_line())
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "nested", "line.json")
            write_schema_file(contract_file, path)
            self.assertEqual(read_schema_file(path), contract_file)


class TestSchemaErrors(unittest.TestCase):
    """Malformed documents name the offending path."""

    def setUp(self):
        self.document = json.loads(serialize(build_contract_file("d", dispatcher_contract())))

    def _parse(self):
        return deserialize(json.dumps(self.document).encode("utf-8"))

    def test_not_json(self):
        with self.assertRaises(SchemaError) as ctx:
            deserialize(b"{not json")
        self.assertEqual(ctx.exception.path, "$")

    def test_missing_data(self):
        with self.assertRaises(SchemaError) as ctx:
            deserialize(b"{}")
        self.assertEqual(ctx.exception.path, "data")

    def test_missing_function_field(self):
        del self.document["data"]["functions"][1]["sea"]
        with self.assertRaises(SchemaError) as ctx:
            self._parse()
        self.assertEqual(ctx.exception.path, "data.functions[1].sea")

    def test_wrong_type(self):
        self.document["data"]["functions"][0]["id"] = True
        with self.assertRaises(SchemaError) as ctx:
            self._parse()
        self.assertEqual(ctx.exception.path, "data.functions[0].id")

    def test_bad_block_bytes(self):
        self.document["data"]["functions"][0]["blocks"][0]["bytes"] = "zz"
        with self.assertRaises(SchemaError) as ctx:
            self._parse()
        self.assertEqual(ctx.exception.path, "data.functions[0].blocks[0].bytes")

    def test_bad_src_line(self):
        self.document["data"]["functions"][0]["blocks"][1]["src"][0] = "DUP1"
        with self.assertRaises(SchemaError) as ctx:
            self._parse()
        self.assertEqual(ctx.exception.path, "data.functions[0].blocks[1].src[0]")

    def test_unknown_mnemonic(self):
        self.document["data"]["functions"][0]["blocks"][1]["src"][0] = "16: FROB"
        with self.assertRaises(SchemaError):
            self._parse()

    def test_bad_call_entry(self):
        self.document["data"]["functions"][0]["call"] = [1, "2"]
        with self.assertRaises(SchemaError) as ctx:
            self._parse()
        self.assertEqual(ctx.exception.path, "data.functions[0].call[1]")


if __name__ == "__main__":
    unittest.main()
