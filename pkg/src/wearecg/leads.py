"""The twelve standard leads in canonical order."""
from __future__ import annotations

from enum import IntEnum


class LeadId(IntEnum):
    I = 0
    II = 1
    III = 2
    aVR = 3
    aVL = 4
    aVF = 5
    V1 = 6
    V2 = 7
    V3 = 8
    V4 = 9
    V5 = 10
    V6 = 11

    @classmethod
    def parse(cls, name: "str | LeadId") -> "LeadId":
        """Look up a lead by name; the augmented-lead prefix is case-insensitive."""
        if isinstance(name, LeadId):
            return name
        key = str(name).strip().upper()
        for lead in cls:
            if lead.name.upper() == key:
                return lead
        raise ValueError(f"unknown lead name {name!r}")

    def __str__(self) -> str:
        return self.name


CANONICAL = tuple(LeadId)
LEAD_NAMES = tuple(lead.name for lead in CANONICAL)
N_LEADS = 12


def parse_leads(spec: "str | list") -> tuple[LeadId, ...]:
    """Parse ``"II,V1,V5"`` or a list of names into lead ids (order preserved)."""
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    leads = tuple(LeadId.parse(s) for s in items if str(s).strip())
    if len(set(leads)) != len(leads):
        raise ValueError(f"duplicate lead in {spec!r}")
    return leads
