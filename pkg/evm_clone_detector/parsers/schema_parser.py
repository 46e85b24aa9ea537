"""
Extraction schema (de)serialisation.

The JSON tree is:

    data
      name, md5
      functions[]
        name, sea, see, id, call
        blocks[]
          name, bytes, sea, eea, id, call, src[]

Function names are qualified `<contract>::<function>` so that every contract
of a multi-contract file is reachable through the same tree.
"""

import json
import os
import re
from typing import Any, Dict, List, Optional, Tuple

from ..models.data_models import BasicBlock, Contract, ContractFile, FunctionUnit, Instruction
from ..models.exceptions import SchemaError
from ..utils.logger import Logger
from .extractor import DEFAULT_CONTRACT
from .opcodes import opcode_for

logger = Logger(__name__)

CONTRACT_SEPARATOR = "::"

_SRC_PATTERN = re.compile(r"^(\d+): (\S+)(?: 0x([0-9a-fA-F]*))?$")
_SELECTOR_PATTERN = re.compile(r"^0x[0-9a-f]{8}$")


def serialize(contract_file: ContractFile) -> bytes:
    """Serialise a ContractFile to schema JSON bytes (deterministic)."""
    functions = []
    for contract, function in contract_file.iter_functions():
        functions.append({
            "name": f"{contract.name}{CONTRACT_SEPARATOR}{function.name}",
            "sea": function.start_offset,
            "see": function.end_offset,
            "id": function.id,
            "call": list(function.callees),
            "blocks": [_block_to_dict(block) for block in function.blocks],
        })

    document = {
        "data": {
            "name": contract_file.name,
            "md5": contract_file.md5,
            "functions": functions,
        }
    }
    return (json.dumps(document, indent=2) + "\n").encode("utf-8")


def _block_to_dict(block: BasicBlock) -> Dict[str, Any]:
    return {
        "name": block.name,
        "bytes": block.raw_bytes.hex(),
        "sea": block.start_offset,
        "eea": block.end_offset,
        "id": block.id,
        "call": list(block.callees),
        "src": [str(ins) for ins in block.instructions],
    }


def deserialize(payload: bytes) -> ContractFile:
    """
    Parse schema JSON bytes back into a ContractFile.

    Raises:
        SchemaError: Naming the path of the first missing or malformed field
    """
    try:
        document = json.loads(payload)
    except (ValueError, UnicodeDecodeError) as e:
        raise SchemaError("$", f"not valid JSON: {e}") from None

    data = _require(document, "data", dict, "")
    name = _require(data, "name", str, "data")
    md5 = _require(data, "md5", str, "data")
    raw_functions = _require(data, "functions", list, "data")

    contracts: Dict[str, Contract] = {}
    for index, raw in enumerate(raw_functions):
        path = f"data.functions[{index}]"
        contract_name, function = _parse_function(raw, path)
        contracts.setdefault(contract_name, Contract(name=contract_name)).functions.append(function)

    return ContractFile(name=name, md5=md5, contracts=list(contracts.values()))


def _parse_function(raw: Any, path: str) -> Tuple[str, FunctionUnit]:
    if not isinstance(raw, dict):
        raise SchemaError(path, "expected an object")
    qualified = _require(raw, "name", str, path)
    contract_name, _, function_name = qualified.rpartition(CONTRACT_SEPARATOR)
    blocks = [
        _parse_block(block, f"{path}.blocks[{i}]")
        for i, block in enumerate(_require(raw, "blocks", list, path))
    ]
    function = FunctionUnit(
        id=_require(raw, "id", int, path),
        name=function_name,
        start_offset=_require(raw, "sea", int, path),
        end_offset=_require(raw, "see", int, path),
        blocks=blocks,
        callees=_int_list(raw, "call", path),
        selector=int(function_name, 16) if _SELECTOR_PATTERN.match(function_name) else None,
    )
    return contract_name or DEFAULT_CONTRACT, function


def _parse_block(raw: Any, path: str) -> BasicBlock:
    if not isinstance(raw, dict):
        raise SchemaError(path, "expected an object")
    hex_bytes = _require(raw, "bytes", str, path)
    try:
        raw_bytes = bytes.fromhex(hex_bytes)
    except ValueError:
        raise SchemaError(f"{path}.bytes", "not a hex string") from None
    src = _require(raw, "src", list, path)
    return BasicBlock(
        id=_require(raw, "id", int, path),
        name=_require(raw, "name", str, path),
        start_offset=_require(raw, "sea", int, path),
        end_offset=_require(raw, "eea", int, path),
        instructions=[_parse_instruction(line, f"{path}.src[{i}]") for i, line in enumerate(src)],
        raw_bytes=raw_bytes,
        callees=_int_list(raw, "call", path),
    )


def _parse_instruction(line: Any, path: str) -> Instruction:
    match = _SRC_PATTERN.match(line) if isinstance(line, str) else None
    if match is None:
        raise SchemaError(path, f"expected 'offset: MNEMONIC [0xoperand]', got {line!r}")
    offset, mnemonic, operand_hex = match.groups()
    try:
        opcode = opcode_for(mnemonic, fork=None)
    except KeyError:
        raise SchemaError(path, f"unknown mnemonic {mnemonic}") from None
    return Instruction(int(offset), opcode, mnemonic, bytes.fromhex(operand_hex or ""))


def _require(obj: Dict[str, Any], key: str, expected: type, parent: str) -> Any:
    path = f"{parent}.{key}" if parent else key
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(path, "required field is missing")
    value = obj[key]
    # bool is an int subclass and never a valid offset or id
    if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
        raise SchemaError(path, f"expected {expected.__name__}, got {type(value).__name__}")
    return value


def _int_list(obj: Dict[str, Any], key: str, parent: str) -> List[int]:
    values = _require(obj, key, list, parent)
    for i, value in enumerate(values):
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaError(f"{parent}.{key}[{i}]", "expected int")
    return list(values)


def read_schema_file(path: str) -> ContractFile:
    with open(path, "rb") as f:
        return deserialize(f.read())


def write_schema_file(contract_file: ContractFile, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(serialize(contract_file))
    logger.debug(f"Wrote schema for {contract_file.name} to {path}")
