"""Shared plumbing for the perturbation operators."""

import zlib
from dataclasses import dataclass, field

from ..data import PerturbationRecord

__all__ = ["Skip", "PerturbSkip", "PerturbOutcome", "derive_seed"]


@dataclass
class Skip:
    """One sub-operation that could not produce a record, with its reason."""

    source_id: str
    stage: str
    reason: str

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "stage": self.stage, "reason": self.reason}


class PerturbSkip(Exception):
    """Raised inside an operator when an instance cannot be perturbed."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class PerturbOutcome:
    """Records emitted for one instance plus the per-instance skip report."""

    records: list[PerturbationRecord] = field(default_factory=list)
    skips: list[Skip] = field(default_factory=list)

    def extend(self, other: "PerturbOutcome") -> None:
        self.records.extend(other.records)
        self.skips.extend(other.skips)


def derive_seed(base_seed: int, *parts: str | int) -> int:
    """Stable per-instance seed: mixes the run seed with string/int parts.

    crc32 rather than hash() so the value survives interpreter restarts.
    """
    acc = zlib.crc32(str(base_seed).encode())
    for part in parts:
        acc = zlib.crc32(str(part).encode(), acc)
    return acc & 0x7FFFFFFF
