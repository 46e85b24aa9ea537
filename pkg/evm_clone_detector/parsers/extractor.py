"""
Contract-file extraction.

Assembles disassembler output into the file / contract / function / block
hierarchy consumed by the embedding model.
"""

import hashlib
import re
from typing import List, Sequence, Tuple, Union

from ..models.data_models import Contract, ContractFile
from ..utils.logger import Logger
from .evm_disassembler import extract_functions, parse_bytecode
from .opcodes import DEFAULT_FORK

logger = Logger(__name__)

DEFAULT_CONTRACT = "main"

# `Name: <hex>` lines declare one contract each in a multi-contract .hex file
_NAMED_BLOB = re.compile(r"^\s*([A-Za-z_$][\w$.]*)\s*:\s*((?:0x)?[0-9A-Fa-f\s]*)$")

Blob = Tuple[str, bytes]


def read_contract_blobs(text: str) -> List[Blob]:
    """
    Split the text of a .hex file into named bytecode blobs.

    A file is either one blob (named `main`) or a sequence of `Name: <hex>`
    lines. Library code is declared as just another named blob.

    Raises:
        BytecodeFormatError: When a blob is not valid hex
    """
    lines = [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    named = [_NAMED_BLOB.match(line) for line in lines]
    if lines and all(named):
        return [(match.group(1), parse_bytecode(match.group(2))) for match in named]
    return [(DEFAULT_CONTRACT, parse_bytecode("".join(lines)))]


def build_contract_file(name: str, code: Union[bytes, str, Sequence[Blob]], fork: str = DEFAULT_FORK) -> ContractFile:
    """
    Build a ContractFile from bytecode.

    Args:
        name: Contract-file name
        code: Runtime bytecode (bytes or hex) for a single contract, or a list of
            (contract name, bytes) blobs for a multi-contract file
        fork: Opcode table revision

    Returns:
        ContractFile with one Contract per non-empty blob; empty input yields zero contracts
    """
    if isinstance(code, (bytes, bytearray, str)):
        blobs: List[Blob] = [(DEFAULT_CONTRACT, parse_bytecode(code))]
    else:
        blobs = [(contract_name, parse_bytecode(blob)) for contract_name, blob in code]

    digest = hashlib.md5(b"".join(blob for _, blob in blobs)).hexdigest()
    contracts = []
    for contract_name, blob in blobs:
        if not blob:
            logger.debug(f"Skipping empty blob {contract_name} in {name}")
            continue
        contracts.append(Contract(name=contract_name, functions=extract_functions(blob, fork)))

    if not contracts:
        logger.warning(f"{name}: no code to analyse")
    else:
        n_functions = sum(len(contract.functions) for contract in contracts)
        logger.debug(f"{name}: {len(contracts)} contracts, {n_functions} functions")

    return ContractFile(name=name, md5=digest, contracts=contracts)
