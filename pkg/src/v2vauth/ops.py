"""Operation counters used to compare protocol cost against the cost table."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

# Per-message costs of the broadcast scheme, by role.
SENDER_COST = {"poly_evals": 1, "hashes": 2, "prp_calls": 0}
PROVISION_PRP_CALLS = 1
TOKEN_UPDATE_INTERPOLATIONS = 1


@dataclass
class OpCounters:
    poly_evals: int = 0
    exps: int = 0
    hashes: int = 0
    prp_calls: int = 0
    interpolations: int = 0
    idnt_evals: int = 0

    def snapshot(self) -> "OpCounters":
        return OpCounters(**asdict(self))

    def since(self, before: "OpCounters") -> "OpCounters":
        return OpCounters(**{f.name: getattr(self, f.name) - getattr(before, f.name) for f in fields(self)})

    def add(self, other: "OpCounters") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def as_dict(self) -> dict:
        return asdict(self)
