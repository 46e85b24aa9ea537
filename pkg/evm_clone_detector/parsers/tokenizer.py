"""
Instruction tokenizer.

Turns an instruction into an operation token and operand tokens. Wide
immediates are normalised to class tokens so that addresses and hashes do
not each become a singleton vocabulary entry.
"""

from enum import Enum
from typing import Iterable, List

from ..models.data_models import Instruction, TokenizedInstruction

ADDRESS_TOKEN = "ADDR"
HASH_TOKEN = "HASH32"


class NormalizationPolicy(str, Enum):
    """Operand normalisation policies; the id is persisted with every model."""
    DEFAULT = "default-v1"
    KEEP_SELECTORS = "selectors-v1"

    @classmethod
    def from_string(cls, value: str) -> 'NormalizationPolicy':
        value = value.strip().lower()
        aliases = {"default": cls.DEFAULT, "selectors": cls.KEEP_SELECTORS}
        return aliases.get(value) or cls(value)


def operand_token(width: int, value: int, policy: NormalizationPolicy = NormalizationPolicy.DEFAULT) -> str:
    """Token for the immediate of a PUSH<width> holding value."""
    if value <= 0xFF:
        return f"0x{value:02x}"
    if width == 4 and policy == NormalizationPolicy.KEEP_SELECTORS:
        return f"0x{value:08x}"
    if width == 20:
        return ADDRESS_TOKEN
    if width == 32:
        return HASH_TOKEN
    return f"CONST{width}"


def tokenize(instruction: Instruction, policy: NormalizationPolicy = NormalizationPolicy.DEFAULT) -> TokenizedInstruction:
    """
    Tokenize one instruction.

    Args:
        instruction: Decoded instruction
        policy: Operand normalisation policy

    Returns:
        Operation token (the mnemonic) plus one operand token for PUSH1..PUSH32
    """
    if not instruction.operand:
        return TokenizedInstruction(instruction.mnemonic)
    width = len(instruction.operand)
    return TokenizedInstruction(
        instruction.mnemonic,
        (operand_token(width, instruction.value, policy),),
    )


def tokenize_all(instructions: Iterable[Instruction],
                 policy: NormalizationPolicy = NormalizationPolicy.DEFAULT) -> List[TokenizedInstruction]:
    return [tokenize(ins, policy) for ins in instructions]
