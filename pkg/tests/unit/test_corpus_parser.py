#!/usr/bin/env python
"""
Unit tests for corpus discovery, file naming and loading.
"""

import os
import sys
import tempfile
import unittest
from pathlib import Path

# Add the parent directory to the path so we can import the modules
sys.path.append(str(Path(__file__).parent.parent.parent))

from evm_clone_detector.detection.detector import attach_index, model_index
from evm_clone_detector.embedding.trainer import train
from evm_clone_detector.models.data_models import LabelStore, VulnerabilityTag
from evm_clone_detector.models.exceptions import DuplicateFunctionError
from evm_clone_detector.parsers.corpus_parser import find_corpus_files, load_contract_file, load_corpus
from evm_clone_detector.parsers.extractor import build_contract_file
from evm_clone_detector.parsers.schema_parser import write_schema_file
from tests.data.sample_bytecode import dispatcher_contract, straight_line
from tests.data.sample_corpus import TINY_HYPERPARAMS


class TestCorpusFiles(unittest.TestCase):
    """Discovery and naming of corpus files."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, relative: str, text: str) -> str:
        path = os.path.join(self.root, relative)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_recursive_discovery_and_missing_paths(self):
        self._write("a/b/one.hex", straight_line().hex())
        self._write("two.json", "{}")
        self._write("notes.txt", "ignored")
        files, errors = find_corpus_files([self.root, os.path.join(self.root, "absent")])
        self.assertEqual([p.name for p in files], ["one.hex", "two.json"])
        self.assertEqual([e['error_type'] for e in errors], ["file_not_found"])

    def test_unique_stems_keep_their_name(self):
        self._write("x/Token.hex", straight_line().hex())
        self._write("y/Vault.hex", dispatcher_contract().hex())
        corpus, errors = load_corpus([self.root])
        self.assertEqual(errors, [])
        self.assertEqual([f.name for f in corpus], ["Token", "Vault"])

    def test_colliding_stems_under_same_directory_name(self):
        self._write("proj1/contracts/Token.hex", straight_line().hex())
        self._write("proj2/contracts/Token.hex", dispatcher_contract().hex())
        self._write("lib/Other.hex", straight_line().hex())
        corpus, errors = load_corpus([self.root])
        self.assertEqual(errors, [])
        self.assertEqual(sorted(f.name for f in corpus), ["Other", "proj1/contracts/Token", "proj2/contracts/Token"])

    def test_colliding_stems_in_one_directory(self):
        contract_file = build_contract_file("Token", straight_line())
        write_schema_file(contract_file, os.path.join(self.root, "a", "Token.json"))
        self._write("a/Token.hex", dispatcher_contract().hex())
        corpus, errors = load_corpus([self.root])
        self.assertEqual(errors, [])
        self.assertEqual(sorted(f.name for f in corpus), ["a/Token.hex", "a/Token.json"])

    def test_colliding_names_train_and_index(self):
        self._write("proj1/contracts/Token.hex", straight_line().hex())
        self._write("proj2/contracts/Token.hex", straight_line().hex())
        corpus, _ = load_corpus([self.root])
        labels = LabelStore({("proj1/contracts/Token", "main"): [VulnerabilityTag.REENTRANCY]})

        params = train(corpus, TINY_HYPERPARAMS)
        attach_index(params, corpus)
        index = model_index(params, labels)
        self.assertEqual(len(index), 2)
        self.assertEqual(len(set(index.keys)), 2)
        tagged = [key for key in index.keys if index.tags_of(key)]
        self.assertEqual([key.file for key in tagged], ["proj1/contracts/Token"])

    def test_json_input_takes_its_file_name(self):
        contract_file = build_contract_file("Original", dispatcher_contract())
        path = os.path.join(self.root, "renamed.json")
        write_schema_file(contract_file, path)
        self.assertEqual(load_contract_file(path).name, "renamed")
        self.assertEqual(load_contract_file(path, name="given").name, "given")
        loaded = load_contract_file(path)
        self.assertEqual(loaded.md5, contract_file.md5)
        self.assertTrue(loaded.verify_md5())

    def test_malformed_and_unreadable_files_are_reported(self):
        self._write("odd.hex", "0x601")
        self._write("bad.json", "{not json")
        self._write("fine.hex", "600100")
        corpus, errors = load_corpus([self.root])
        self.assertEqual([f.name for f in corpus], ["fine"])
        self.assertEqual(sorted(e['error_type'] for e in errors), ["malformed_hex", "schema_error"])


class TestDuplicateIdentities(unittest.TestCase):
    """Training refuses a corpus in which two functions share an identity."""

    def test_same_file_name_twice(self):
        corpus = [build_contract_file("Token", straight_line()), build_contract_file("Token", straight_line())]
        with self.assertRaises(DuplicateFunctionError) as ctx:
            train(corpus, TINY_HYPERPARAMS)
        self.assertEqual([str(key) for key in ctx.exception.keys], ["Token:main:main"])

    def test_same_contract_name_twice_in_one_file(self):
        code = straight_line().hex()
        corpus = [build_contract_file("pair", [("Token", code), ("Token", code)])]
        with self.assertRaises(DuplicateFunctionError):
            train(corpus, TINY_HYPERPARAMS)


if __name__ == "__main__":
    unittest.main()
