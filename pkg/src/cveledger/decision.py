"""Blockchain-suitability decision procedure.

Six yes/no questions evaluated in a fixed order with short-circuiting:
storage need, multiple writers, an available online trusted third party,
known writers, trusted writers, public verifiability. Later answers cannot
change a verdict reached earlier.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class ArchitectureVerdict(str, Enum):
    NO_BLOCKCHAIN = "NO_BLOCKCHAIN"
    PERMISSIONLESS = "PERMISSIONLESS"
    PUBLIC_PERMISSIONED = "PUBLIC_PERMISSIONED"
    PRIVATE_PERMISSIONED = "PRIVATE_PERMISSIONED"


@dataclass(frozen=True)
class DecisionInputs:
    need_store: bool
    multiple_writers: bool
    online_ttp_available: bool
    writers_known: bool
    writers_trusted: bool
    public_verifiability: bool

    def to_dict(self) -> dict:
        return {
            "needStore": self.need_store,
            "multipleWriters": self.multiple_writers,
            "onlineTTPAvailable": self.online_ttp_available,
            "writersKnown": self.writers_known,
            "writersTrusted": self.writers_trusted,
            "publicVerifiability": self.public_verifiability,
        }


def decide_architecture(inputs: DecisionInputs) -> ArchitectureVerdict:
    if not inputs.need_store:
        return ArchitectureVerdict.NO_BLOCKCHAIN
    if not inputs.multiple_writers:
        return ArchitectureVerdict.NO_BLOCKCHAIN
    if inputs.online_ttp_available:
        return ArchitectureVerdict.NO_BLOCKCHAIN
    if not inputs.writers_known:
        return ArchitectureVerdict.PERMISSIONLESS
    if inputs.writers_trusted:
        return ArchitectureVerdict.NO_BLOCKCHAIN
    if inputs.public_verifiability:
        return ArchitectureVerdict.PUBLIC_PERMISSIONED
    return ArchitectureVerdict.PRIVATE_PERMISSIONED


def decision_depth(inputs: DecisionInputs) -> int:
    """1-based index of the question that settles the verdict."""
    if not inputs.need_store:
        return 1
    if not inputs.multiple_writers:
        return 2
    if inputs.online_ttp_available:
        return 3
    if not inputs.writers_known:
        return 4
    if inputs.writers_trusted:
        return 5
    return 6
