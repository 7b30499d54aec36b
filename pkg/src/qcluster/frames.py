"""64-bit readout result frame.

One frame carries up to 21 qubit results, three bits each: a 2-bit state in
the low bits of the slot and a valid flag above them. Slot i occupies bits
[3i, 3i+2]; bit 63 is spare, written as zero and ignored on decode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import DuplicateIndex, IndexOutOfRange

QUBITS_PER_FRAME = 21
SLOT_BITS = 3
SPARE_BIT = 63

_STATE_MASK = 0b011
_VALID_FLAG = 0b100


@dataclass(frozen=True)
class QubitResult:
    index: int
    state: int

    def __post_init__(self):
        if not 0 <= self.index < QUBITS_PER_FRAME:
            raise IndexOutOfRange(
                f"qubit index {self.index} outside 0..{QUBITS_PER_FRAME - 1}"
            )
        if self.state not in (0, 1, 2, 3):
            raise ValueError(f"state {self.state} does not fit in 2 bits")


def encode_frame(results: Iterable[QubitResult]) -> int:
    """Pack results into a 64-bit word; empty slots stay all-zero."""
    word = 0
    seen = set()
    for result in results:
        if result.index in seen:
            raise DuplicateIndex(f"qubit index {result.index} appears twice")
        seen.add(result.index)
        word |= (_VALID_FLAG | result.state) << (SLOT_BITS * result.index)
    return word


def decode_frame(word: int) -> list[QubitResult]:
    """Unpack the valid slots of a frame word, ordered by index.

    Bits without the valid flag decode to nothing; the spare bit is ignored.
    """
    results = []
    for index in range(QUBITS_PER_FRAME):
        slot = (word >> (SLOT_BITS * index)) & 0b111
        if slot & _VALID_FLAG:
            results.append(QubitResult(index, slot & _STATE_MASK))
    return results
